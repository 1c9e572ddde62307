"""Functional physical memory with per-word capability tags, and hierarchy page tables."""
from __future__ import annotations

from typing import Optional

from .capability import CapabilityError
from .config import PAGE_BYTES

PAGE_SHIFT = 12
PAGE_MASK = PAGE_BYTES - 1
WORD_MASK = ~7
# Pages per namespace are allocated eagerly at create time; refuse absurd spans.
MAX_PAGES_PER_NAMESPACE = 1 << 16


class NodeMemory:
    """One node's DRAM: the private legacy region followed by namespace pages.

    Tags are tracked per 8-byte word as a set of tagged word offsets. Any
    store that overlaps a word without going through the tagged path clears
    that word's tag.
    """

    def __init__(self, node: int, private_bytes: int):
        if private_bytes % PAGE_BYTES:
            raise ValueError("private region must be page aligned")
        self.node = node
        self.private = bytearray(private_bytes)
        self.private_tags: set[int] = set()
        self.pages: dict[int, bytearray] = {}
        self.page_tags: dict[int, set[int]] = {}
        self.private_pages = private_bytes // PAGE_BYTES
        self.next_ppn = self.private_pages

    def alloc_page(self) -> int:
        ppn = self.next_ppn
        self.next_ppn += 1
        return ppn

    def page(self, ppn: int) -> bytearray:
        page = self.pages.get(ppn)
        if page is None:
            page = self.pages[ppn] = bytearray(PAGE_BYTES)
        return page

    def read(self, ppn: int, off: int, size: int) -> bytes:
        page = self.pages.get(ppn)
        if page is None:
            return bytes(size)
        return bytes(page[off:off + size])

    def write(self, ppn: int, off: int, data: bytes) -> None:
        self.page(ppn)[off:off + len(data)] = data
        tags = self.page_tags.get(ppn)
        if tags:
            for w in range(off & WORD_MASK, off + len(data), 8):
                tags.discard(w)

    def read_tag(self, ppn: int, off: int) -> bool:
        tags = self.page_tags.get(ppn)
        return bool(tags) and off in tags

    def write_tagged(self, ppn: int, off: int, value: int, tag: bool) -> None:
        self.page(ppn)[off:off + 8] = value.to_bytes(8, "little")
        tags = self.page_tags.setdefault(ppn, set())
        if tag:
            tags.add(off)
        else:
            tags.discard(off)

    def tags_in(self, ppn: int, lo: int, hi: int) -> frozenset:
        tags = self.page_tags.get(ppn)
        if not tags:
            return frozenset()
        return frozenset(t for t in tags if lo <= t and t + 8 <= hi + 1)

    def write_masked(self, ppn: int, base: int, payload: bytes, mask: int, tags: frozenset) -> None:
        """Apply bytes of ``payload`` (which starts at page offset ``base``) whose mask bit is set."""
        page = self.page(ppn)
        ptags = self.page_tags.setdefault(ppn, set())
        if mask == (1 << len(payload)) - 1:
            page[base:base + len(payload)] = payload
            m = 0
        else:
            m = mask
        i = 0
        while m:
            if m & 1:
                page[base + i] = payload[i]
            m >>= 1
            i += 1
        m = mask
        first = base & WORD_MASK
        for w in range(first, base + mask.bit_length(), 8):
            word_bits = ((m << base) >> w) & 0xFF if w >= 0 else 0
            if word_bits:
                if word_bits == 0xFF and w in tags:
                    ptags.add(w)
                else:
                    ptags.discard(w)

    # private region ---------------------------------------------------------

    def private_read_tag(self, off: int) -> bool:
        return off in self.private_tags

    def private_write(self, off: int, data: bytes) -> None:
        self.private[off:off + len(data)] = data
        if self.private_tags:
            for w in range(off & WORD_MASK, off + len(data), 8):
                self.private_tags.discard(w)


class PageTables:
    """Single-level tables keyed by (home node, table ppn): virtual page -> (node, ppn)."""

    def __init__(self):
        self._tables: dict[tuple[int, int], dict[int, tuple[int, int]]] = {}

    def table(self, home: int, pt_ppn: int) -> dict[int, tuple[int, int]]:
        return self._tables.setdefault((home, pt_ppn), {})

    def walk(self, home: int, pt_ppn: int, vpage: int) -> Optional[tuple[int, int]]:
        table = self._tables.get((home, pt_ppn))
        return None if table is None else table.get(vpage)

    def tables(self):
        return self._tables.items()


class NamespaceTooLarge(CapabilityError):
    reason = "NamespaceTooLarge"
