import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zenosim.cache import LRUCache, SetAssocCache, SetAssocLRU, make_lru


def replay(cache, keys):
    for k in keys:
        if cache.lookup(k) is None:
            cache.insert(k, k + 1)
    return cache.hits


def test_lru_evicts_least_recent():
    c = LRUCache(2)
    c.insert("a", 1)
    c.insert("b", 2)
    assert c.lookup("a") == 1
    assert c.insert("c", 3) == ("b", 2)
    assert "a" in c and "c" in c and "b" not in c
    assert (c.hits, c.misses) == (1, 0)


def test_lru_reinsert_refreshes_without_evicting():
    c = LRUCache(2)
    c.insert(1, "x")
    c.insert(2, "y")
    assert c.insert(1, "z") is None
    assert c.insert(3, "w") == (2, "y")
    assert c.peek(1) == "z"


def test_lru_invalidation():
    c = LRUCache(8)
    for k in range(6):
        c.insert(k, k % 2)
    assert c.invalidate(3) and not c.invalidate(3)
    assert c.invalidate_where(lambda k, v: v == 0) == 3
    assert sorted(k for k, _ in c.items()) == [1, 5]
    assert c.clear() == 2 and len(c) == 0


def test_lru_rejects_zero_capacity():
    with pytest.raises(ValueError):
        LRUCache(0)


def test_make_lru_chooses_organisation():
    assert isinstance(make_lru(16), LRUCache)
    assert isinstance(make_lru(16, 16), LRUCache)
    assert isinstance(make_lru(16, 4), SetAssocLRU)
    with pytest.raises(ValueError):
        SetAssocLRU(10, 4)


def test_set_assoc_lines():
    c = SetAssocCache(256, 2, 64)  # 4 lines, 2 sets of 2 ways
    assert c.num_sets == 2
    assert not c.access(0) and c.access(8) and c.access(63)
    assert not c.access(128) and not c.access(256)  # third line in set 0 evicts line 0
    assert not c.contains(0)
    assert c.contains(130) and c.contains(256)
    assert c.invalidate_range(120, 200) == 2
    assert (c.hits, c.misses) == (2, 3)


def test_set_assoc_full_ways_is_fully_associative():
    c = SetAssocCache(512, 0, 64)
    assert c.num_sets == 1 and c.ways == 8


@settings(max_examples=200)
@given(st.lists(st.integers(0, 40), max_size=300))
def test_lru_inclusion_property(keys):
    # a larger fully associative LRU never hits less on the same stream
    hits = [replay(LRUCache(n), keys) for n in (1, 2, 4, 8, 16, 32, 64, 128)]
    assert hits == sorted(hits)


@given(st.lists(st.integers(0, 40), max_size=300), st.integers(1, 32))
def test_lru_matches_stack_distance(keys, capacity):
    # a reference hits iff fewer than `capacity` distinct keys were touched since its previous use
    expected = 0
    for i, k in enumerate(keys):
        prev = [j for j in range(i) if keys[j] == k]
        if prev and len(set(keys[prev[-1] + 1:i])) < capacity:
            expected += 1
    assert replay(LRUCache(capacity), keys) == expected


@given(st.lists(st.integers(0, 1 << 16), max_size=200))
def test_set_assoc_counts_every_access(addrs):
    c = SetAssocCache(1024, 4, 64)
    for a in addrs:
        c.access(a)
        assert c.contains(a)
    assert c.hits + c.misses == len(addrs)
