"""Namespace capability model.

Pure state transitions over a sharded namespace directory: creation,
derivation, recursive revocation and the access decision. Nothing in here
knows about cycles; the node model charges timing around these calls.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

MASK64 = (1 << 64) - 1
NULL_ID = 0
SERIAL_BITS = 48


class AccessKind(enum.Enum):
    READ = "Read"
    WRITE = "Write"
    EXECUTE = "Execute"


class Fault(enum.Enum):
    """Reasons check_access can refuse an access, in precedence order."""

    REVOKED = "Revoked"
    PERMISSION_DENIED = "PermissionDenied"
    OUT_OF_BOUNDS = "OutOfBounds"


class CapabilityError(Exception):
    reason = "CapabilityError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.reason)


class InvalidBounds(CapabilityError):
    reason = "InvalidBounds"


class UntaggedCapability(CapabilityError):
    reason = "UntaggedCapability"


class RevokedNamespace(CapabilityError):
    reason = "RevokedNamespace"


class BoundsExceedParent(CapabilityError):
    reason = "BoundsExceedParent"


class PermsExceedParent(CapabilityError):
    reason = "PermsExceedParent"


class NamespaceNotFound(CapabilityError):
    reason = "NotFound"


@dataclass(frozen=True)
class Perms:
    read: bool = False
    write: bool = False
    execute: bool = False

    @classmethod
    def from_bits(cls, bits: int) -> "Perms":
        return cls(bool(bits & 1), bool(bits & 2), bool(bits & 4))

    @classmethod
    def parse(cls, text: str) -> "Perms":
        """Parse ``"RW-"`` style strings."""
        text = text.upper()
        return cls("R" in text, "W" in text, "X" in text)

    def to_bits(self) -> int:
        return int(self.read) | int(self.write) << 1 | int(self.execute) << 2

    def allows(self, kind: AccessKind) -> bool:
        if kind is AccessKind.READ:
            return self.read
        if kind is AccessKind.WRITE:
            return self.write
        return self.execute

    def __le__(self, other: "Perms") -> bool:
        return ((not self.read or other.read)
                and (not self.write or other.write)
                and (not self.execute or other.execute))

    def __str__(self) -> str:
        return ("R" if self.read else "-") + ("W" if self.write else "-") + ("X" if self.execute else "-")


RW = Perms(True, True, False)
READ_ONLY = Perms(True, False, False)


@dataclass(frozen=True)
class TaggedWord:
    """A 64-bit word with the out-of-band validity tag."""

    value: int
    tag: bool = False

    def untagged(self) -> "TaggedWord":
        return TaggedWord(self.value & MASK64, False)


NULL_WORD = TaggedWord(0, False)


@dataclass(frozen=True)
class NamespaceMetadata:
    ns_id: int
    min_bound: int
    max_bound: int
    perm_read: bool
    perm_write: bool
    perm_exec: bool
    valid: bool
    page_table_ppn: int
    root_ns_id: int
    parent_ns_id: int
    children_head: int = NULL_ID
    next_sibling: int = NULL_ID

    @property
    def perms(self) -> Perms:
        return Perms(self.perm_read, self.perm_write, self.perm_exec)

    @property
    def is_root(self) -> bool:
        return self.parent_ns_id == NULL_ID

    @property
    def size(self) -> int:
        return self.max_bound - self.min_bound + 1


# Number of metadata words written by create/derive: bounds (2), permission
# bits, page table ppn, root id, parent id, children head, sibling link.
METADATA_WORDS = 8


def check_access(meta: NamespaceMetadata, offset: int, size_bytes: int, kind: AccessKind) -> Optional[Fault]:
    """Return None when the access is allowed, otherwise the first failing reason."""
    if size_bytes < 1:
        raise ValueError("size_bytes must be >= 1")
    if not meta.valid:
        return Fault.REVOKED
    if not meta.perms.allows(kind):
        return Fault.PERMISSION_DENIED
    last = offset + size_bytes - 1
    if offset < meta.min_bound or last > meta.max_bound or last > MASK64:
        return Fault.OUT_OF_BOUNDS
    return None


def make_id(node: int, serial: int) -> int:
    return (node << SERIAL_BITS) | serial


def id_node(ns_id: int) -> int:
    return ns_id >> SERIAL_BITS


class NamespaceDirectory:
    """Distributed namespace directory, sharded by ``id mod node_count``.

    Entries are immutable snapshots; every mutation swaps in a replaced
    record so earlier snapshots (as held by metadata caches) never change
    underneath their holders.
    """

    def __init__(self, node_count: int, page_table_allocator: Optional[Callable[[int], int]] = None):
        if node_count < 1:
            raise ValueError("node_count must be >= 1")
        self.node_count = node_count
        self._shards: list[dict[int, NamespaceMetadata]] = [{} for _ in range(node_count)]
        self._next_serial = [1] * node_count
        self._next_pt = [0] * node_count
        self._alloc_pt = page_table_allocator

    def home_node(self, ns_id: int) -> int:
        return ns_id % self.node_count

    def _allocate_id(self, node: int) -> int:
        if not 0 <= node < self.node_count:
            raise ValueError(f"node {node} does not exist")
        serial = self._next_serial[node]
        if serial >= 1 << SERIAL_BITS:
            raise OverflowError(f"namespace serials exhausted on node {node}")
        self._next_serial[node] = serial + 1
        return make_id(node, serial)

    def _put(self, meta: NamespaceMetadata) -> None:
        self._shards[self.home_node(meta.ns_id)][meta.ns_id] = meta

    def lookup(self, ns_id: int) -> NamespaceMetadata:
        meta = self._shards[self.home_node(ns_id)].get(ns_id) if ns_id != NULL_ID else None
        if meta is None:
            raise NamespaceNotFound(f"namespace {ns_id:#x} not found")
        return meta

    def get(self, ns_id: int) -> Optional[NamespaceMetadata]:
        try:
            return self.lookup(ns_id)
        except NamespaceNotFound:
            return None

    def shard(self, node: int) -> dict[int, NamespaceMetadata]:
        """Read-only view of one node's shard."""
        return dict(self._shards[node])

    def entries(self) -> Iterator[NamespaceMetadata]:
        for shard in self._shards:
            yield from shard.values()

    def __len__(self) -> int:
        return sum(len(s) for s in self._shards)

    def _resolve(self, word: TaggedWord) -> NamespaceMetadata:
        if not word.tag:
            raise UntaggedCapability(f"word {word.value:#x} carries no tag")
        meta = self.lookup(word.value)
        if not meta.valid:
            raise RevokedNamespace(f"namespace {word.value:#x} has been revoked")
        return meta

    @staticmethod
    def _check_bounds(min_bound: int, max_bound: int) -> None:
        if not (0 <= min_bound <= MASK64 and 0 <= max_bound <= MASK64):
            raise InvalidBounds("bounds must be 64-bit unsigned offsets")
        if min_bound > max_bound:
            raise InvalidBounds(f"min {min_bound} > max {max_bound}")

    def create(self, node: int, min_bound: int, max_bound: int, perms: Perms,
               page_table_ppn: Optional[int] = None) -> TaggedWord:
        self._check_bounds(min_bound, max_bound)
        ns_id = self._allocate_id(node)
        if page_table_ppn is None:
            page_table_ppn = self._new_page_table(self.home_node(ns_id))
        self._put(NamespaceMetadata(
            ns_id=ns_id, min_bound=min_bound, max_bound=max_bound,
            perm_read=perms.read, perm_write=perms.write, perm_exec=perms.execute,
            valid=True, page_table_ppn=page_table_ppn, root_ns_id=ns_id, parent_ns_id=NULL_ID,
        ))
        return TaggedWord(ns_id, True)

    def _new_page_table(self, node: int) -> int:
        if self._alloc_pt is not None:
            return self._alloc_pt(node)
        self._next_pt[node] += 1
        return self._next_pt[node]

    def derive(self, parent: TaggedWord, min_bound: int, max_bound: int, perms: Perms,
               node: Optional[int] = None) -> TaggedWord:
        """Derive a child of ``parent``; ``node`` is the requester (defaults to the parent's creator)."""
        pmeta = self._resolve(parent)
        self._check_bounds(min_bound, max_bound)
        if min_bound < pmeta.min_bound or max_bound > pmeta.max_bound:
            raise BoundsExceedParent(
                f"[{min_bound}, {max_bound}] not within parent [{pmeta.min_bound}, {pmeta.max_bound}]")
        if not perms <= pmeta.perms:
            raise PermsExceedParent(f"{perms} exceeds parent {pmeta.perms}")
        if node is None:
            node = id_node(pmeta.ns_id) % self.node_count
        ns_id = self._allocate_id(node)
        self._put(NamespaceMetadata(
            ns_id=ns_id, min_bound=min_bound, max_bound=max_bound,
            perm_read=perms.read, perm_write=perms.write, perm_exec=perms.execute,
            valid=True, page_table_ppn=pmeta.page_table_ppn, root_ns_id=pmeta.root_ns_id,
            parent_ns_id=pmeta.ns_id, next_sibling=pmeta.children_head,
        ))
        self._put(replace(pmeta, children_head=ns_id))
        return TaggedWord(ns_id, True)

    def children(self, ns_id: int) -> Iterator[int]:
        child = self.lookup(ns_id).children_head
        while child != NULL_ID:
            yield child
            child = self.lookup(child).next_sibling

    def subtree(self, ns_id: int) -> list[int]:
        """ns_id followed by every transitive descendant (preorder)."""
        out = []
        stack = [ns_id]
        while stack:
            cur = stack.pop()
            out.append(cur)
            stack.extend(reversed(list(self.children(cur))))
        return out

    def revoke(self, target: TaggedWord) -> int:
        """Invalidate ``target`` and all descendants; returns how many entries changed."""
        return len(self.revoke_ids(target))

    def revoke_ids(self, target: TaggedWord) -> list[int]:
        self._resolve(target)
        revoked = []
        for ns_id in self.subtree(target.value):
            meta = self.lookup(ns_id)
            if meta.valid:
                self._put(replace(meta, valid=False))
                revoked.append(ns_id)
        return revoked
