"""LRU tag stores used for every cached structure in a node.

These hold tags only; data lives in the functional memory model. A
``ways`` of 0 means fully associative.
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Hashable, Optional


class LRUCache:
    """Fully associative LRU map with hit/miss counters."""

    __slots__ = ("capacity", "_entries", "hits", "misses")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0

    def lookup(self, key: Hashable):
        """Return the cached value (refreshing recency) or None; counts the probe."""
        entries = self._entries
        value = entries.get(key)
        if value is None:
            self.misses += 1
            return None
        entries.move_to_end(key)
        self.hits += 1
        return value

    def peek(self, key: Hashable):
        return self._entries.get(key)

    def insert(self, key: Hashable, value) -> Optional[tuple]:
        """Insert as most-recent; returns the evicted (key, value) if any."""
        entries = self._entries
        if key in entries:
            entries[key] = value
            entries.move_to_end(key)
            return None
        entries[key] = value
        if len(entries) > self.capacity:
            return entries.popitem(last=False)
        return None

    def invalidate(self, key: Hashable) -> bool:
        return self._entries.pop(key, None) is not None

    def invalidate_where(self, predicate) -> int:
        doomed = [k for k, v in self._entries.items() if predicate(k, v)]
        for k in doomed:
            del self._entries[k]
        return len(doomed)

    def clear(self) -> int:
        n = len(self._entries)
        self._entries.clear()
        return n

    def items(self):
        return list(self._entries.items())

    def __contains__(self, key) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)


class SetAssocCache:
    """Set-associative LRU cache of line tags for the L1s and L2."""

    __slots__ = ("line_shift", "num_sets", "ways", "_sets", "hits", "misses")

    def __init__(self, size_bytes: int, ways: int, line_bytes: int = 64):
        lines = size_bytes // line_bytes
        if lines < 1 or line_bytes & (line_bytes - 1):
            raise ValueError("cache must hold at least one power-of-two sized line")
        if ways <= 0 or ways > lines:
            ways = lines
        self.line_shift = line_bytes.bit_length() - 1
        self.ways = ways
        self.num_sets = max(1, lines // ways)
        self._sets: list[list[int]] = [[] for _ in range(self.num_sets)]
        self.hits = 0
        self.misses = 0

    def access(self, addr: int) -> bool:
        """Touch the line holding ``addr``; allocate on miss. Returns True on hit."""
        line = addr >> self.line_shift
        s = self._sets[line % self.num_sets]
        if s and s[-1] == line:
            self.hits += 1
            return True
        try:
            s.remove(line)
        except ValueError:
            self.misses += 1
            s.append(line)
            if len(s) > self.ways:
                del s[0]
            return False
        s.append(line)
        self.hits += 1
        return True

    def contains(self, addr: int) -> bool:
        line = addr >> self.line_shift
        return line in self._sets[line % self.num_sets]

    def invalidate_range(self, addr: int, nbytes: int) -> int:
        first = addr >> self.line_shift
        last = (addr + nbytes - 1) >> self.line_shift
        dropped = 0
        for line in range(first, last + 1):
            s = self._sets[line % self.num_sets]
            if line in s:
                s.remove(line)
                dropped += 1
        return dropped


class SetAssocLRU:
    """Set-associative variant of :class:`LRUCache` (same interface)."""

    def __init__(self, capacity: int, ways: int):
        if capacity < 1 or ways < 1 or capacity % ways:
            raise ValueError("capacity must be a positive multiple of ways")
        self.capacity = capacity
        self._sets = [LRUCache(ways) for _ in range(capacity // ways)]

    def _set(self, key) -> LRUCache:
        return self._sets[hash(key) % len(self._sets)]

    @property
    def hits(self) -> int:
        return sum(s.hits for s in self._sets)

    @property
    def misses(self) -> int:
        return sum(s.misses for s in self._sets)

    def lookup(self, key):
        return self._set(key).lookup(key)

    def peek(self, key):
        return self._set(key).peek(key)

    def insert(self, key, value):
        return self._set(key).insert(key, value)

    def invalidate(self, key) -> bool:
        return self._set(key).invalidate(key)

    def invalidate_where(self, predicate) -> int:
        return sum(s.invalidate_where(predicate) for s in self._sets)

    def clear(self) -> int:
        return sum(s.clear() for s in self._sets)

    def items(self):
        return [kv for s in self._sets for kv in s.items()]

    def __contains__(self, key) -> bool:
        return key in self._set(key)

    def __len__(self) -> int:
        return sum(len(s) for s in self._sets)


def make_lru(capacity: int, ways: int = 0):
    """Fully associative when ``ways`` is 0 or >= capacity."""
    if ways <= 0 or ways >= capacity:
        return LRUCache(capacity)
    return SetAssocLRU(capacity, ways)
