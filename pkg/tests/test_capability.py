import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenosim.capability import (
    MASK64,
    AccessKind,
    BoundsExceedParent,
    Fault,
    InvalidBounds,
    NamespaceDirectory,
    NamespaceMetadata,
    NamespaceNotFound,
    Perms,
    PermsExceedParent,
    RevokedNamespace,
    TaggedWord,
    UntaggedCapability,
    check_access,
)
from zenosim.checks import brute_force_decision, check_access_oracle, revocation_tree

RW = Perms.parse("RW-")
R = Perms.parse("R--")


def meta(lo=0, hi=4095, r=True, w=True, x=False, valid=True):
    return NamespaceMetadata(ns_id=1, min_bound=lo, max_bound=hi, perm_read=r, perm_write=w, perm_exec=x,
                             valid=valid, page_table_ppn=1, root_ns_id=1, parent_ns_id=0)


def test_create_sets_root_metadata():
    d = NamespaceDirectory(4)
    w = d.create(0, 0, 32767, RW)
    m = d.lookup(w.value)
    assert w.tag
    assert (m.min_bound, m.max_bound) == (0, 32767)
    assert (m.perm_read, m.perm_write, m.perm_exec, m.valid) == (True, True, False, True)
    assert m.parent_ns_id == 0 and m.root_ns_id == w.value


def test_create_rejects_inverted_bounds():
    with pytest.raises(InvalidBounds):
        NamespaceDirectory(1).create(0, 8, 4, RW)


def test_successive_creates_are_distinct_and_tagged():
    d = NamespaceDirectory(2)
    a, b = d.create(0, 0, 7, RW), d.create(0, 0, 7, RW)
    assert a.value != b.value and a.tag and b.tag


def test_derive_shares_root_and_page_table():
    d = NamespaceDirectory(4)
    p = d.create(0, 0, 32767, RW)
    c = d.derive(p, 0, 16383, R)
    pm, cm = d.lookup(p.value), d.lookup(c.value)
    assert cm.root_ns_id == p.value and cm.page_table_ppn == pm.page_table_ppn
    assert cm.parent_ns_id == p.value
    assert list(d.children(p.value)) == [c.value]


def test_derive_errors():
    d = NamespaceDirectory(4)
    p = d.create(0, 0, 32767, RW)
    with pytest.raises(BoundsExceedParent):
        d.derive(p, 0, 65535, R)
    with pytest.raises(PermsExceedParent):
        d.derive(p, 0, 10, Perms.parse("RWX"))
    with pytest.raises(UntaggedCapability):
        d.derive(p.untagged(), 0, 10, R)
    with pytest.raises(InvalidBounds):
        d.derive(p, 10, 0, R)
    d.revoke(p)
    with pytest.raises(RevokedNamespace):
        d.derive(p, 0, 10, R)


def test_failed_derive_changes_nothing():
    d = NamespaceDirectory(2)
    p = d.create(0, 0, 100, RW)
    before = {m.ns_id: m for m in d.entries()}
    with pytest.raises(BoundsExceedParent):
        d.derive(p, 0, 101, R)
    assert {m.ns_id: m for m in d.entries()} == before


def test_revoke_leaf_then_access_faults():
    d = NamespaceDirectory(1)
    w = d.create(0, 0, 10, RW)
    assert d.revoke(w) == 1
    assert check_access(d.lookup(w.value), 0, 1, AccessKind.READ) is Fault.REVOKED


def test_revoke_counts_whole_subtree():
    d = NamespaceDirectory(4)
    p = d.create(0, 0, 1000, RW)
    a = d.derive(p, 0, 500, RW)
    d.derive(p, 501, 1000, R)
    c = d.derive(a, 0, 10, R)
    assert d.revoke(p) == 4
    assert check_access(d.lookup(c.value), 0, 1, AccessKind.READ) is Fault.REVOKED


def test_double_revoke_is_an_error():
    d = NamespaceDirectory(1)
    w = d.create(0, 0, 10, RW)
    d.revoke(w)
    with pytest.raises(RevokedNamespace):
        d.revoke(w)


def test_revoke_requires_tag():
    d = NamespaceDirectory(1)
    w = d.create(0, 0, 10, RW)
    with pytest.raises(UntaggedCapability):
        d.revoke(TaggedWord(w.value, False))


@pytest.mark.parametrize("m, off, size, kind, want", [
    (meta(r=True), 0, 4, AccessKind.READ, None),
    (meta(r=True), 4093, 4, AccessKind.READ, Fault.OUT_OF_BOUNDS),
    (meta(w=False), 0, 8, AccessKind.WRITE, Fault.PERMISSION_DENIED),
    (meta(valid=False), 0, 1, AccessKind.READ, Fault.REVOKED),
    (meta(valid=False, r=False), 99999, 8, AccessKind.READ, Fault.REVOKED),
    (meta(r=False), 99999, 8, AccessKind.READ, Fault.PERMISSION_DENIED),
    (meta(lo=MASK64 - 3, hi=MASK64), MASK64 - 3, 8, AccessKind.READ, Fault.OUT_OF_BOUNDS),
])
def test_check_access_examples(m, off, size, kind, want):
    assert check_access(m, off, size, kind) is want


def test_check_access_rejects_empty_size():
    with pytest.raises(ValueError):
        check_access(meta(), 0, 0, AccessKind.READ)


def test_lookup_null_and_unknown():
    d = NamespaceDirectory(4)
    with pytest.raises(NamespaceNotFound):
        d.lookup(0)
    with pytest.raises(NamespaceNotFound):
        d.lookup(12345)


def test_lookup_is_node_independent_and_sharded():
    d = NamespaceDirectory(4)
    ids = [d.create(n, 0, 7, RW).value for n in range(4) for _ in range(3)]
    for i in ids:
        assert i in d.shard(i % 4)
        assert sum(i in d.shard(n) for n in range(4)) == 1


def test_oracle_suite():
    assert check_access_oracle(2000, seed=7).passed
    assert revocation_tree(80, seed=3).passed


# ---------------------------------------------------------------- properties

u64 = st.integers(0, MASK64)


@st.composite
def metadata(draw):
    lo = draw(u64)
    hi = draw(st.integers(lo, min(MASK64, lo + draw(st.sampled_from([0, 7, 4095, MASK64])))))
    return NamespaceMetadata(ns_id=1, min_bound=lo, max_bound=hi, perm_read=draw(st.booleans()),
                             perm_write=draw(st.booleans()), perm_exec=draw(st.booleans()),
                             valid=draw(st.booleans()), page_table_ppn=1, root_ns_id=1, parent_ns_id=0)


@given(metadata(), u64, st.sampled_from([1, 2, 4, 8]), st.sampled_from(list(AccessKind)))
def test_check_access_matches_brute_force(m, off, size, kind):
    assert check_access(m, off, size, kind) == brute_force_decision(m, off, size, kind)


@given(metadata(), st.sampled_from([1, 2, 4, 8]), st.sampled_from(list(AccessKind)))
def test_bounds_edges(m, size, kind):
    at_min = check_access(m, m.min_bound, size, kind)
    assert at_min == brute_force_decision(m, m.min_bound, size, kind)
    past = check_access(m, m.max_bound, size, kind) if size > 1 else None
    if size > 1 and m.valid and m.perms.allows(kind):
        assert past is Fault.OUT_OF_BOUNDS


ops = st.lists(st.tuples(st.sampled_from(["create", "derive", "revoke"]), st.integers(0, 10**6),
                         st.integers(0, 10**6), st.integers(0, 7), st.integers(0, 3)), max_size=60)


@settings(max_examples=60)
@given(ops)
def test_directory_invariants_under_random_operations(seq):
    d = NamespaceDirectory(4)
    words: list[TaggedWord] = []
    issued: list[int] = []
    for op, a, b, bits, node in seq:
        snapshot = {m.ns_id: (m.min_bound, m.max_bound, m.perms) for m in d.entries()}
        try:
            if op == "create" or not words:
                w = d.create(node, min(a, b), max(a, b), Perms.from_bits(bits))
            elif op == "derive":
                w = d.derive(words[a % len(words)], min(a, b), max(a, b), Perms.from_bits(bits), node=node)
            else:
                d.revoke(words[a % len(words)])
                w = None
        except (RevokedNamespace, BoundsExceedParent, PermsExceedParent):
            w = None
        if w is not None:
            words.append(w)
            issued.append(w.value)
        # existing bounds and permission bits never change
        for m in d.entries():
            if m.ns_id in snapshot:
                assert snapshot[m.ns_id] == (m.min_bound, m.max_bound, m.perms)
    assert len(set(issued)) == len(issued)
    assert 0 not in issued
    for m in d.entries():
        assert m.min_bound <= m.max_bound
        assert (m.root_ns_id == m.ns_id) == (m.parent_ns_id == 0)
        if m.parent_ns_id:
            p = d.lookup(m.parent_ns_id)
            assert p.min_bound <= m.min_bound and m.max_bound <= p.max_bound
            assert m.perms <= p.perms
            assert m.root_ns_id == p.root_ns_id and m.page_table_ppn == p.page_table_ppn
            if not p.valid:
                # revocation closure
                assert not m.valid


@given(st.integers(0, MASK64), st.booleans())
def test_untagged_copy_never_gains_tag(value, tag):
    assert TaggedWord(value, tag).untagged().tag is False


def test_revocation_closure_random_trees():
    for seed in range(5):
        rng = random.Random(seed)
        d = NamespaceDirectory(8)
        words = [d.create(0, 0, 1 << 16, RW)]
        for _ in range(60):
            p = rng.choice(words)
            pm = d.lookup(p.value)
            lo = rng.randint(pm.min_bound, pm.max_bound)
            words.append(d.derive(p, lo, rng.randint(lo, pm.max_bound), R, node=rng.randrange(8)))
        target = rng.choice(words)
        n = d.revoke(target)
        sub = d.subtree(target.value)
        assert n == len(sub)
        for ns in sub:
            for kind in AccessKind:
                assert check_access(d.lookup(ns), 0, 1, kind) is Fault.REVOKED
