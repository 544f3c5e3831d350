"""Network graph, demand and routing model.

Nodes are attachment points (int or str ids, one type per graph). Edges are
undirected with unit hop weight and a capacity in Mb/s. Demands ask for one
piece of content from a source at one codec bitrate.

Transcoded delivery uses a two-leg model: a *trunk* from the source to the
transcoder, shared by every demand for the same content assigned to that
transcoder and carried at the highest rate they request, and a *leaf* from
the transcoder to each client at that client's own rate.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

NodeId = Hashable
Edge = tuple  # (a, b) with a < b

INF = math.inf


class ModelError(ValueError):
    """Malformed graph, demand or routing input."""


class InvalidNodeError(ModelError, KeyError):
    pass


class NoTranscoderError(ModelError):
    pass


def edge_key(a: NodeId, b: NodeId) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple
    capacity: Mapping[Edge, float]
    sources: frozenset = frozenset()
    clients: frozenset = frozenset()
    candidates: frozenset = frozenset()
    adjacency: Mapping[NodeId, tuple] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(sorted(set(self.nodes)))
        object.__setattr__(self, "nodes", nodes)
        node_set = set(nodes)
        adj: dict = {v: [] for v in nodes}
        cap = {}
        for (a, b), u in self.capacity.items():
            if a == b:
                raise ModelError(f"self-loop on node {a!r}")
            if a not in node_set or b not in node_set:
                raise InvalidNodeError(f"edge ({a!r}, {b!r}) references an unknown node")
            if not u > 0:
                raise ModelError(f"edge ({a!r}, {b!r}) has non-positive capacity {u!r}")
            key = edge_key(a, b)
            if key in cap:
                raise ModelError(f"duplicate edge {key!r}")
            cap[key] = float(u)
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "capacity", cap)
        object.__setattr__(self, "adjacency", {v: tuple(sorted(n)) for v, n in adj.items()})
        for role in ("sources", "clients", "candidates"):
            members = frozenset(getattr(self, role))
            unknown = members - node_set
            if unknown:
                raise InvalidNodeError(f"{role} reference unknown nodes {sorted(unknown)!r}")
            object.__setattr__(self, role, members)

    @classmethod
    def build(
        cls,
        edges: Iterable[tuple],
        nodes: Iterable[NodeId] = (),
        sources: Iterable[NodeId] = (),
        clients: Iterable[NodeId] = (),
        candidates: Iterable[NodeId] = (),
        default_capacity: float = 1e4,
    ) -> "NetworkGraph":
        """Build from ``(a, b)`` or ``(a, b, capacity)`` tuples."""
        cap: dict = {}
        all_nodes = set(nodes)
        for e in edges:
            a, b = e[0], e[1]
            u = e[2] if len(e) > 2 else default_capacity
            key = edge_key(a, b)
            if key in cap:
                raise ModelError(f"duplicate edge {key!r}")
            cap[key] = u
            all_nodes.update((a, b))
        return cls(
            nodes=tuple(sorted(all_nodes)),
            capacity=cap,
            sources=frozenset(sources),
            clients=frozenset(clients),
            candidates=frozenset(candidates),
        )

    @property
    def edges(self) -> tuple:
        return tuple(sorted(self.capacity))

    def __contains__(self, node) -> bool:
        return node in self.adjacency

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        dist = hop_distances(self, self.nodes[0])
        return all(d != INF for d in dist.values())


@dataclass(frozen=True)
class CodecRate:
    label: str
    bitrate: float  # Mb/s

    def __post_init__(self):
        if not self.bitrate > 0:
            raise ModelError(f"codec {self.label!r} has non-positive bitrate")


@dataclass(frozen=True)
class Demand:
    source: NodeId
    destination: NodeId
    rate: CodecRate
    content: str = "default"

    @property
    def bitrate(self) -> float:
        return self.rate.bitrate


DemandSet = Sequence[Demand]


def check_demands(graph: NetworkGraph, demands: DemandSet, codecs: Iterable[CodecRate] | None = None):
    """Raise ModelError unless every demand is well formed for ``graph``."""
    allowed = None if codecs is None else set(codecs)
    for i, d in enumerate(demands):
        if d.source not in graph.sources:
            raise ModelError(f"demand {i}: source {d.source!r} is not a source node")
        if d.destination not in graph.clients:
            raise ModelError(f"demand {i}: destination {d.destination!r} is not a client node")
        if allowed is not None and d.rate not in allowed:
            raise ModelError(f"demand {i}: codec {d.rate.label!r} not in the scenario codec set")


def hop_distances(graph: NetworkGraph, origin: NodeId) -> dict:
    """Unit-weight shortest-path hop counts from ``origin``; unreachable nodes map to INF."""
    if origin not in graph.adjacency:
        raise InvalidNodeError(f"unknown node {origin!r}")
    adj = graph.adjacency
    dist = dict.fromkeys(graph.nodes, INF)
    dist[origin] = 0
    queue = deque([origin])
    while queue:
        v = queue.popleft()
        nd = dist[v] + 1
        for w in adj[v]:
            if dist[w] == INF:
                dist[w] = nd
                queue.append(w)
    return dist


def degree(graph: NetworkGraph, node: NodeId) -> int:
    try:
        return len(graph.adjacency[node])
    except KeyError:
        raise InvalidNodeError(f"unknown node {node!r}") from None


class PathCache:
    """Memoised hop distances and tie-broken shortest paths for one graph.

    A path from ``a`` to ``b`` is the lexicographically smallest node sequence
    among all shortest paths: walk from ``a`` always stepping to the smallest
    neighbour that is one hop closer to ``b``.
    """

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self._dist: dict = {}
        self._paths: dict = {}

    def distances(self, origin: NodeId) -> dict:
        d = self._dist.get(origin)
        if d is None:
            d = self._dist[origin] = hop_distances(self.graph, origin)
        return d

    def dist(self, a: NodeId, b: NodeId) -> float:
        return self.distances(b)[a]

    def path(self, a: NodeId, b: NodeId) -> tuple | None:
        key = (a, b)
        if key in self._paths:
            return self._paths[key]
        to_b = self.distances(b)
        if to_b.get(a, INF) == INF:
            p = None
        else:
            adj = self.graph.adjacency
            seq = [a]
            cur = a
            while cur != b:
                want = to_b[cur] - 1
                cur = next(w for w in adj[cur] if to_b[w] == want)
                seq.append(cur)
            p = tuple(seq)
        self._paths[key] = p
        return p


@dataclass(frozen=True)
class Route:
    nodes: tuple
    rate: float

    @property
    def edges(self) -> tuple:
        n = self.nodes
        return tuple(edge_key(n[i], n[i + 1]) for i in range(len(n) - 1))

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


@dataclass(frozen=True)
class RoutePlan:
    """Routes for a demand set.

    ``leaves[i]`` carries demand ``i`` (None when it is not routed),
    ``assignment[i]`` is its transcoder (None for direct routing), and
    ``trunks`` maps ``(source, transcoder, content)`` to the shared trunk.
    """

    leaves: tuple
    assignment: tuple
    trunks: Mapping[tuple, Route] = field(default_factory=dict)

    def streams(self) -> list:
        """Every route carrying traffic, trunks first in key order."""
        out = [self.trunks[k] for k in sorted(self.trunks, key=repr)]
        out.extend(r for r in self.leaves if r is not None)
        return out


@dataclass(frozen=True)
class LoadReport:
    total_load: float  # Mb/s x hops
    edge_load: Mapping[Edge, float]
    admitted: int
    blocked: tuple = ()  # input positions of blocked demands

    def csv_row(self, scenario: str, solver: str) -> dict:
        return {
            "scenario": scenario,
            "solver": solver,
            "total_load": f"{self.total_load:.6g}",
            "admitted": self.admitted,
            "blocked": len(self.blocked),
        }


LOAD_CSV_FIELDS = ("scenario", "solver", "total_load", "admitted", "blocked")


def _sites(placement) -> list:
    sites = getattr(placement, "transcoders", placement)
    return list(sites or ())


def closest_transcoder(paths: PathCache, sites: Sequence[NodeId], client: NodeId):
    """Nearest site to ``client`` by hops, lowest id on ties; None if unreachable."""
    to_client = paths.distances(client)
    best, best_d = None, INF
    for s in sorted(sites):
        d = to_client[s]
        if d < best_d:
            best, best_d = s, d
    return best


def build_routes(graph: NetworkGraph, demands: DemandSet, placement, *, paths: PathCache | None = None) -> RoutePlan:
    sites = _sites(placement)
    if not sites:
        raise NoTranscoderError("placement has no transcoders; use build_direct_routes")
    for s in sites:
        if s not in graph.adjacency:
            raise InvalidNodeError(f"unknown transcoder site {s!r}")
    paths = paths or PathCache(graph)
    leaves, assignment = [], []
    trunk_rate: dict = {}
    for i, d in enumerate(demands):
        site = closest_transcoder(paths, sites, d.destination)
        leaf = paths.path(site, d.destination) if site is not None else None
        trunk = paths.path(d.source, site) if site is not None else None
        if leaf is None or trunk is None:
            raise ModelError(f"demand {i} is unreachable")
        leaves.append(Route(leaf, d.bitrate))
        assignment.append(site)
        key = (d.source, site, d.content)
        trunk_rate[key] = max(trunk_rate.get(key, 0.0), d.bitrate)
    trunks = {k: Route(paths.path(k[0], k[1]), r) for k, r in trunk_rate.items()}
    return RoutePlan(tuple(leaves), tuple(assignment), trunks)


def build_direct_routes(graph: NetworkGraph, demands: DemandSet, *, paths: PathCache | None = None) -> RoutePlan:
    paths = paths or PathCache(graph)
    leaves = []
    for i, d in enumerate(demands):
        p = paths.path(d.source, d.destination)
        if p is None:
            raise ModelError(f"demand {i} is unreachable")
        leaves.append(Route(p, d.bitrate))
    return RoutePlan(tuple(leaves), (None,) * len(leaves), {})


def network_load(plan: RoutePlan) -> LoadReport:
    """Total load = sum over carried streams of bitrate x hop count; shared trunks count once."""
    edge_load: dict = {}
    total = 0.0
    for route in plan.streams():
        total += route.rate * route.hops
        for e in route.edges:
            edge_load[e] = edge_load.get(e, 0.0) + route.rate
    admitted = sum(1 for r in plan.leaves if r is not None)
    return LoadReport(total, edge_load, admitted, ())


def admit_demands(graph: NetworkGraph, demands: DemandSet, placement, *, paths: PathCache | None = None) -> LoadReport:
    """Sequential first-fit admission under per-edge capacity.

    A demand is admitted when its leaf plus the increase of its trunk (if it
    raises the trunk's rate, or opens a new trunk) fit on every edge.
    Unreachable demands are blocked. ``blocked`` lists input positions. With an empty placement every demand is
    routed directly.
    """
    paths = paths or PathCache(graph)
    sites = _sites(placement)
    cap = graph.capacity
    edge_load: dict = {}
    trunk_rate: dict = {}
    total = 0.0
    admitted = 0
    blocked = []
    for i, d in enumerate(demands):
        increments: list = []  # (route nodes, added rate)
        if sites:
            site = closest_transcoder(paths, sites, d.destination)
            leaf = paths.path(site, d.destination) if site is not None else None
            trunk = paths.path(d.source, site) if site is not None else None
            if leaf is None or trunk is None:
                blocked.append(i)
                continue
            key = (d.source, site, d.content)
            extra = max(0.0, d.bitrate - trunk_rate.get(key, 0.0))
            increments.append((leaf, d.bitrate))
            if extra > 0:
                increments.append((trunk, extra))
        else:
            key = None
            direct = paths.path(d.source, d.destination)
            if direct is None:
                blocked.append(i)
                continue
            increments.append((direct, d.bitrate))

        wanted: dict = {}
        for nodes, rate in increments:
            for a, b in zip(nodes, nodes[1:]):
                e = edge_key(a, b)
                wanted[e] = wanted.get(e, 0.0) + rate
        if any(edge_load.get(e, 0.0) + r > cap[e] for e, r in wanted.items()):
            blocked.append(i)
            continue
        for e, r in wanted.items():
            edge_load[e] = edge_load.get(e, 0.0) + r
        total += sum(rate * (len(nodes) - 1) for nodes, rate in increments)
        if key is not None:
            trunk_rate[key] = max(trunk_rate.get(key, 0.0), d.bitrate)
        admitted += 1
    return LoadReport(total, edge_load, admitted, tuple(blocked))
