import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import HALT, machine
from zenosim.capability import TaggedWord
from zenosim.config import LatencyConfig
from zenosim.interconnect import (
    MeshCoord,
    MisroutedRequest,
    Network,
    RemoteRequest,
    RequestKind,
    Response,
    RoutingError,
    flits,
    round_trip_latency,
    route_hops,
)


def net(w, h, server=None):
    n = Network(w, h, LatencyConfig())
    n.servers = [server or (lambda req: Response(True, service=100, payload_bytes=4096))] * (w * h)
    return n


@pytest.mark.parametrize("w, h, a, b, hops", [
    (2, 2, 0, 0, 0), (2, 2, 0, 3, 2), (4, 4, 0, 15, 6), (4, 4, 5, 6, 1), (8, 8, 0, 63, 14), (8, 8, 7, 56, 14),
])
def test_hop_counts(w, h, a, b, hops):
    assert net(w, h).hops(a, b) == hops


def test_round_trip_formula(lat):
    # 2 hops each way, 512 flits each way, then the remote service time
    assert round_trip_latency(2, 4096, 100, lat) == 2 * 2 * 3 + 2 * 5 * 512 + 100
    assert flits(0, 8) == 1 and flits(9, 8) == 2
    n = net(2, 2)
    resp = n.send(RemoteRequest(RequestKind.READ_BLOCK, 0, 3, ns_id=7, size=4096))
    assert resp.latency == 2 * 2 * 3 + 2 * 5 * 512 + 100


def test_max_hops_from_corner_and_centre():
    assert net(8, 8).max_hops_from(0) == 14
    assert net(3, 3).max_hops_from(4) == 2


def test_routing_errors():
    n = net(2, 2)
    with pytest.raises(RoutingError):
        n.send(RemoteRequest(RequestKind.READ_BLOCK, 1, 1, ns_id=7))
    with pytest.raises(RoutingError):
        n.send(RemoteRequest(RequestKind.READ_BLOCK, 0, 4, ns_id=7))
    with pytest.raises(ValueError):
        RemoteRequest(RequestKind.WRITE_BLOCK, 0, 1)


@given(st.integers(1, 8), st.integers(1, 8), st.data())
def test_hops_symmetric_and_triangle(w, h, data):
    n = net(w, h)
    a, b, c = (data.draw(st.integers(0, w * h - 1)) for _ in range(3))
    assert n.hops(a, b) == n.hops(b, a)
    assert n.hops(a, c) <= n.hops(a, b) + n.hops(b, c)
    assert (n.hops(a, b) == 0) == (a == b)
    assert MeshCoord.of(a, w).node_id(w) == a
    assert route_hops(MeshCoord.of(a, w), MeshCoord.of(b, w)) == n.hops(a, b)


@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8), st.booleans()), max_size=60))
def test_message_conservation(msgs):
    flip = iter([ok for _, _, ok in msgs])
    n = net(3, 3, lambda req: Response(next(flip), service=1, payload_bytes=8))
    sent = 0
    for a, b, _ in msgs:
        if a == b:
            next(flip)
            continue
        n.send(RemoteRequest(RequestKind.DIRECTORY_READ, a, b, ns_id=1))
        sent += 1
    assert sum(c.sent for c in n.counters) == sent
    assert all(c.sent == c.responses + c.faults for c in n.counters)


# ------------------------------------------------------------------ network interface


def _remote_page(lo=0, hi=8191):
    m = machine([HALT, HALT], mesh="2x1")
    word = m.create_namespace(0, lo, hi, 3)
    meta = m.directory.lookup(word.value)
    home = m.directory.home_node(word.value)
    owner, ppn = m.tables.walk(home, meta.page_table_ppn, 1)
    return m, word.value, owner, ppn


def test_ni_serves_a_valid_block():
    m, ns, owner, ppn = _remote_page()
    assert owner == 1
    resp = m.network.send(RemoteRequest(RequestKind.READ_BLOCK, 0, 1, ns_id=ns, offset=4096, size=4096, ppn=ppn))
    assert resp.ok and len(resp.data) == 4096


def test_ni_rechecks_bounds_and_revocation():
    m, ns, owner, ppn = _remote_page(hi=4096 + 63)
    req = RemoteRequest(RequestKind.READ_BLOCK, 0, 1, ns_id=ns, offset=4096, size=4096, ppn=ppn)
    assert m.network.send(req).fault == "OutOfBounds"
    m.directory.revoke(TaggedWord(ns, True))
    m.nodes[1].ni_mdc.clear()
    ok = RemoteRequest(RequestKind.READ_BLOCK, 0, 1, ns_id=ns, offset=4096, size=64, ppn=ppn)
    assert m.network.send(ok).fault == "Revoked"
    assert m.network.counters[0].faults == 2


def test_ni_rejects_forged_translation():
    m, ns, owner, ppn = _remote_page()
    req = RemoteRequest(RequestKind.READ_BLOCK, 0, 1, ns_id=ns, offset=4096, size=64, ppn=ppn + 1)
    assert m.network.send(req).fault == "BadTranslation"


def test_misrouted_directory_request():
    m, ns, _, _ = _remote_page()
    wrong = 1 - m.directory.home_node(ns)
    with pytest.raises(MisroutedRequest):
        m.network.send(RemoteRequest(RequestKind.DIRECTORY_READ, 0, wrong, ns_id=ns))


def test_every_request_answered_in_a_real_run():
    from zenosim.bench import BenchmarkSpec, generate
    from zenosim.system import simulate
    from conftest import config

    cfg = config("3x3")
    report, m = simulate(cfg, generate(BenchmarkSpec(kind="random", element_count=64), 9))
    assert report.fault_free
    for c in m.network.counters:
        assert c.sent == c.responses + c.faults and c.faults == 0
    assert sum(c.sent for c in m.network.counters) >= report.total("remote_requests") > 0
