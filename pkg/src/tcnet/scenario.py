"""Scenario documents and the seeded random scenario generator."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import networkx as nx

from .model import CodecRate, Demand, ModelError, NetworkGraph, check_demands
from .sim import SimConfig

ROLES = ("source", "client", "candidate")
MODES = ("non-blocking", "blocking")
DEFAULT_CODECS = (CodecRate("SD", 3.0), CodecRate("HD", 8.0), CodecRate("4K", 25.0))


class ScenarioError(ValueError):
    """Invalid scenario input; ``where`` names the offending field or line."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class InfeasibleScenarioError(ScenarioError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    transcoder_count: int = 3
    separation: float = 0.01
    pool_rule: str = "some"
    generations: int = 10
    population: int = 50
    operator_fraction: float = 0.5
    exhaustive_budget: int = 10**5
    random_draws: int = 1


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: NetworkGraph
    codecs: tuple
    demands: tuple
    mode: str = "non-blocking"
    solver: SolverSettings = SolverSettings()
    sim: SimConfig = SimConfig()
    seed: int | None = None
    generator: dict | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        g = self.graph
        nodes = []
        for v in g.nodes:
            roles = [r for r, s in (("source", g.sources), ("client", g.clients), ("candidate", g.candidates)) if v in s]
            nodes.append({"id": v, "roles": roles})
        return {
            "name": self.name,
            "mode": self.mode,
            "nodes": nodes,
            "edges": [{"a": a, "b": b, "capacity": u} for (a, b), u in sorted(g.capacity.items())],
            "codecs": [{"label": c.label, "bitrate": c.bitrate} for c in self.codecs],
            "demands": [
                {"source": d.source, "dest": d.destination, "codec": d.rate.label, "content": d.content}
                for d in self.demands
            ],
            "solver": asdict(self.solver),
            "sim": asdict(self.sim),
        }


def _require(obj: dict, key: str, where: str):
    if not isinstance(obj, dict):
        raise ScenarioError(where, "expected an object")
    if key not in obj:
        raise ScenarioError(f"{where}.{key}", "missing")
    return obj[key]


def _block(cls, data: Any, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ScenarioError(where, "expected an object")
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ScenarioError(f"{where}.{key}", "unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(where, str(exc)) from None


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    """Build a Scenario from a decoded JSON document, validating every field."""
    if not isinstance(doc, dict):
        raise ScenarioError("$", "scenario must be a JSON object")
    nodes_raw = _require(doc, "nodes", "$")
    ids, roles = [], {r: [] for r in ROLES}
    for i, n in enumerate(nodes_raw):
        where = f"nodes[{i}]"
        nid = _require(n, "id", where)
        if not isinstance(nid, (int, str)) or isinstance(nid, bool):
            raise ScenarioError(f"{where}.id", "must be an integer or string")
        ids.append(nid)
        for r in n.get("roles", []):
            if r not in ROLES:
                raise ScenarioError(f"{where}.roles", f"unknown role {r!r}")
            roles[r].append(nid)
    if len({type(i) for i in ids}) > 1:
        raise ScenarioError("nodes", "node ids must all be integers or all strings")
    if len(set(ids)) != len(ids):
        raise ScenarioError("nodes", "duplicate node id")

    edges = {}
    for i, e in enumerate(_require(doc, "edges", "$")):
        where = f"edges[{i}]"
        a, b, cap = _require(e, "a", where), _require(e, "b", where), _require(e, "capacity", where)
        if not isinstance(cap, (int, float)) or cap <= 0:
            raise ScenarioError(f"{where}.capacity", "must be a positive number")
        key = (a, b) if a <= b else (b, a)
        if key in edges:
            raise ScenarioError(where, f"duplicate edge {a!r}-{b!r}")
        edges[key] = cap
    try:
        graph = NetworkGraph(tuple(ids), edges, frozenset(roles["source"]), frozenset(roles["client"]), frozenset(roles["candidate"]))
    except ModelError as exc:
        raise ScenarioError("edges", str(exc)) from None
    if not graph.is_connected():
        raise ScenarioError("edges", "graph is not connected")

    codecs = {}
    for i, c in enumerate(_require(doc, "codecs", "$")):
        where = f"codecs[{i}]"
        label, rate = _require(c, "label", where), _require(c, "bitrate", where)
        if label in codecs:
            raise ScenarioError(f"{where}.label", f"duplicate codec {label!r}")
        try:
            codecs[label] = CodecRate(str(label), float(rate))
        except (ModelError, TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}.bitrate", str(exc)) from None

    demands = []
    for i, d in enumerate(_require(doc, "demands", "$")):
        where = f"demands[{i}]"
        codec = _require(d, "codec", where)
        if codec not in codecs:
            raise ScenarioError(f"{where}.codec", f"unknown codec {codec!r}")
        demands.append(Demand(_require(d, "source", where), _require(d, "dest", where), codecs[codec], str(d.get("content", "default"))))
    try:
        check_demands(graph, demands)
    except ModelError as exc:
        raise ScenarioError("demands", str(exc)) from None

    mode = doc.get("mode", "non-blocking")
    if mode not in MODES:
        raise ScenarioError("mode", f"must be one of {MODES}")
    return Scenario(
        name=str(doc.get("name", name)),
        graph=graph,
        codecs=tuple(codecs.values()),
        demands=tuple(demands),
        mode=mode,
        solver=_block(SolverSettings, doc.get("solver"), "solver"),
        sim=_block(SimConfig, doc.get("sim"), "sim"),
        seed=doc.get("seed"),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    except OSError as exc:
        raise ScenarioError(str(path), exc.strerror or str(exc)) from None
    return parse_scenario(doc, name=path.stem)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=1) + "\n")


@dataclass(frozen=True)
class GeneratorSpec:
    nodes: int = 100
    topology: str = "erdos-renyi"  # or "watts-strogatz"
    mean_degree: float = 4.0
    rewire: float = 0.1
    candidate_fraction: float = 0.1
    client_fraction: float = 0.1
    source_count: int = 1
    content_count: int = 3
    demands_per_client: int = 1  # clients hosted behind each client node
    demand_count: int | None = None  # overrides demands_per_client x client nodes
    codecs: tuple = DEFAULT_CODECS
    capacity: tuple = (1000.0, 1000.0)
    seed: int = 0
    # "retry": resample with sub-seeds seed*1000+k until connected;
    # "stitch": keep the first draw and chain its components together.
    connect: str = "retry"
    max_retries: int = 100

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least two nodes")
        if self.topology not in ("erdos-renyi", "watts-strogatz"):
            raise ValueError(f"unknown topology {self.topology!r}")
        for name in ("candidate_fraction", "client_fraction"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.connect not in ("stitch", "retry"):
            raise ValueError(f"unknown connect mode {self.connect!r}")


def _topology(spec: GeneratorSpec, seed: int) -> nx.Graph:
    n = spec.nodes
    if spec.topology == "watts-strogatz":
        k = max(2, int(round(spec.mean_degree)))
        return nx.watts_strogatz_graph(n, k, spec.rewire, seed=seed)
    p = min(1.0, spec.mean_degree / (n - 1))
    return nx.gnp_random_graph(n, p, seed=seed)


def generate_scenario(spec: GeneratorSpec, name: str | None = None, mode: str = "non-blocking", solver: SolverSettings = SolverSettings()) -> Scenario:
    """Random connected scenario built from ``spec``; same spec, same scenario."""
    if spec.connect == "stitch":
        g = _topology(spec, spec.seed * 1000)
        heads = sorted(min(c) for c in nx.connected_components(g))
        g.add_edges_from(zip(heads, heads[1:]))
    else:
        for attempt in range(spec.max_retries):
            g = _topology(spec, spec.seed * 1000 + attempt)
            if nx.is_connected(g):
                break
        else:
            raise InfeasibleScenarioError("generator", f"no connected graph after {spec.max_retries} attempts")

    rng = random.Random(spec.seed)
    nodes = sorted(g.nodes)
    lo, hi = spec.capacity
    caps = {(min(a, b), max(a, b)): (lo if lo == hi else round(rng.uniform(lo, hi), 3)) for a, b in sorted(g.edges)}
    n_src = max(1, min(spec.source_count, len(nodes) - 1))
    sources = sorted(rng.sample(nodes, n_src))
    others = [v for v in nodes if v not in sources]
    n_cli = max(1, min(len(others), round(spec.client_fraction * len(nodes))))
    clients = sorted(rng.sample(others, n_cli))
    n_cand = max(1, round(spec.candidate_fraction * len(nodes)))
    candidates = sorted(rng.sample(nodes, n_cand))
    graph = NetworkGraph(tuple(nodes), caps, frozenset(sources), frozenset(clients), frozenset(candidates))

    contents = [f"c{i}" for i in range(spec.content_count)]
    n_dem = spec.demand_count if spec.demand_count is not None else spec.demands_per_client * len(clients)
    demands = []
    for i in range(n_dem):
        dest = clients[i % len(clients)]
        ci = rng.randrange(len(contents))
        demands.append(Demand(sources[ci % len(sources)], dest, rng.choice(spec.codecs), contents[ci]))
    return Scenario(
        name=name or f"{spec.topology}-{spec.nodes}-s{spec.seed}",
        graph=graph,
        codecs=tuple(spec.codecs),
        demands=tuple(demands),
        mode=mode,
        solver=solver,
        seed=spec.seed,
        generator=asdict(spec),
    )


def with_seed(spec: GeneratorSpec, seed: int) -> GeneratorSpec:
    return replace(spec, seed=seed)
