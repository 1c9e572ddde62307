"""2D mesh interconnect and the wire format between network interfaces.

Links have fixed latency and unlimited bandwidth; a request is served the
moment its issuing instruction executes and the round trip is charged to
the requester.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

from .config import LatencyConfig


@dataclass(frozen=True, order=True)
class MeshCoord:
    x: int
    y: int

    @classmethod
    def of(cls, node: int, width: int) -> "MeshCoord":
        return cls(node % width, node // width)

    def node_id(self, width: int) -> int:
        return self.y * width + self.x


def route_hops(src: MeshCoord, dst: MeshCoord) -> int:
    """Hop count under dimension-ordered XY routing."""
    return abs(src.x - dst.x) + abs(src.y - dst.y)


def flits(nbytes: int, flit_bytes: int) -> int:
    # A message always occupies at least one flit.
    return max(1, -(-nbytes // flit_bytes))


def round_trip_latency(hops: int, payload_bytes: int, service: int, lat: LatencyConfig) -> int:
    return 2 * hops * lat.router_hop + 2 * lat.link_flit * flits(payload_bytes, lat.flit_bytes) + service


class RequestKind(enum.Enum):
    READ_BLOCK = "ReadBlock"
    WRITE_BLOCK = "WriteBlock"
    DIRECTORY_READ = "DirectoryRead"
    DIRECTORY_WRITE = "DirectoryWrite"
    INVALIDATE = "Invalidate"


DATA_KINDS = (RequestKind.READ_BLOCK, RequestKind.WRITE_BLOCK)


@dataclass(frozen=True)
class RemoteRequest:
    """One message on the mesh.

    Data requests name the namespace and the byte range they touch; ``ppn`` is
    the requester's translation of that range, which the server re-validates
    against the hierarchy page table. ``mask`` marks valid bytes of
    ``payload`` for block writes (bit i = byte ``offset + i``).
    """

    kind: RequestKind
    origin: int
    dest: int
    ns_id: int = 0
    offset: int = 0
    size: int = 0
    payload: bytes = b""
    mask: int = 0
    tags: frozenset = frozenset()
    ppn: int = -1
    seq: int = 0

    def __post_init__(self):
        if self.kind in DATA_KINDS and self.ns_id == 0:
            raise ValueError("data requests must carry a namespace id")


@dataclass
class Response:
    ok: bool
    data: bytes = b""
    tags: frozenset = frozenset()
    fault: Optional[str] = None
    service: int = 0
    latency: int = 0
    payload_bytes: int = 0


class RoutingError(Exception):
    pass


class MisroutedRequest(Exception):
    pass


class RemoteFault(Exception):
    def __init__(self, reason: str, request: RemoteRequest):
        super().__init__(f"{request.kind.value} from node {request.origin} to node {request.dest}: {reason}")
        self.reason = reason
        self.request = request


@dataclass
class LinkCounters:
    sent: int = 0
    responses: int = 0
    faults: int = 0
    bytes_moved: int = 0


@dataclass
class Network:
    width: int
    height: int
    latency: LatencyConfig
    servers: list[Callable[[RemoteRequest], Response]] = field(default_factory=list)
    trace: Optional[list] = None

    def __post_init__(self):
        self.counters = [LinkCounters() for _ in range(self.node_count)]
        self._seq = [0] * self.node_count

    @property
    def node_count(self) -> int:
        return self.width * self.height

    def coord(self, node: int) -> MeshCoord:
        if not 0 <= node < self.node_count:
            raise RoutingError(f"node {node} outside {self.width}x{self.height} mesh")
        return MeshCoord.of(node, self.width)

    def hops(self, a: int, b: int) -> int:
        return route_hops(self.coord(a), self.coord(b))

    def max_hops_from(self, node: int) -> int:
        c = self.coord(node)
        return max(c.x, self.width - 1 - c.x) + max(c.y, self.height - 1 - c.y)

    def latency_for(self, src: int, dst: int, payload_bytes: int, service: int = 0) -> int:
        return round_trip_latency(self.hops(src, dst), payload_bytes, service, self.latency)

    def send(self, req: RemoteRequest) -> Response:
        """Deliver ``req`` to its destination's network interface and return the timed response."""
        if req.origin == req.dest:
            raise RoutingError("self-addressed request; use the local path")
        self.coord(req.origin)
        self.coord(req.dest)
        self._seq[req.origin] += 1
        ctr = self.counters[req.origin]
        ctr.sent += 1
        resp = self.servers[req.dest](req)
        moved = resp.payload_bytes
        resp.latency = self.latency_for(req.origin, req.dest, moved, resp.service)
        if resp.ok:
            ctr.responses += 1
            ctr.bytes_moved += moved
        else:
            ctr.faults += 1
        if self.trace is not None:
            self.trace.append(("deliver", req.origin, req.dest, req.kind.value, req.ns_id,
                               req.offset, req.size, resp.ok, moved))
        return resp

    def next_seq(self, node: int) -> int:
        return self._seq[node] + 1
