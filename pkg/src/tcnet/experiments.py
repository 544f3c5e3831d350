"""Experiment presets and the runners behind each CLI subcommand.

Every runner returns plain dict rows keyed by one of the ``*_FIELDS`` tuples.
Rows are sorted before they are written, so output does not depend on run
order, and every row carries the seed that reproduces it.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Iterable, Iterator, Sequence

from .model import admit_demands, build_direct_routes, build_routes, network_load
from .placement import (
    GaParams,
    HeuristicParams,
    Placement,
    place_exhaustive,
    place_ga,
    place_heuristic,
    place_random,
)
from .scenario import GeneratorSpec, InfeasibleScenarioError, Scenario, ScenarioError, generate_scenario, parse_scenario
from .sim import MIGRATION_TYPES, SWEEP_CSV_FIELDS, SimConfig, SweepRow, sweep

MAX_DESK_NODES = 600

SOLVER_FIELDS = (
    "scenario", "solver", "n", "lambda", "seed", "score", "load", "admitted", "runtime_s",
    "nodes", "client_fraction", "mode", "rep", "blocked",
)
BENEFIT_FIELDS = (
    "scenario", "nodes", "seed", "n", "lambda", "demands", "min_shared",
    "direct_load", "transcoded_load", "ratio",
)
DELTA_FIELDS = ("type", "rtt_ms", "seed", "t_s", "delta_s", "src_mac")

# Many clients behind each client node and few distinct contents, which is
# the regime where shared trunks pay off.
MANY_CLIENTS = GeneratorSpec(
    nodes=200,
    topology="watts-strogatz",
    mean_degree=4,
    candidate_fraction=0.1,
    client_fraction=0.1,
    content_count=2,
    demands_per_client=10,
)

# Small graphs for the exhaustive comparison: |V| 10-15 and |A| <= 8.
ORACLE_SMALL = GeneratorSpec(
    nodes=10,
    mean_degree=3,
    candidate_fraction=0.5,
    client_fraction=0.35,
    content_count=1,
    demands_per_client=5,
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


@dataclass(frozen=True)
class PlacementPreset:
    name: str
    description: str
    command: str  # "compare" or "benefit"
    base: GeneratorSpec | None = MANY_CLIENTS
    sizes: tuple = (200,)
    seeds: tuple = (0,)
    separations: tuple = (0.01,)
    client_fractions: tuple = ()  # empty keeps base.client_fraction
    transcoder_count: int = 6
    mode: str = "non-blocking"
    ga_generations: int = 10
    ga_stop: bool = True  # stop the GA once it matches the heuristic
    random_draws: int = 100
    exhaustive: bool = False
    scenario_file: str | None = None  # packaged scenario instead of the generator


@dataclass(frozen=True)
class MigrationPreset:
    name: str
    description: str
    command: str = "migrate"
    rtts: tuple = (125.0, 250.0)
    types: tuple = MIGRATION_TYPES
    reps: int = 50
    base: SimConfig = SimConfig()


SIZES = (100, 200, 300, 400, 500, 600)

PRESETS: dict = {
    p.name: p
    for p in (
        PlacementPreset("tiny", "three-node line with one candidate", "compare", base=None,
                        scenario_file="tiny.json", transcoder_count=1, random_draws=1, exhaustive=True),
        PlacementPreset("smoke", "two small generated graphs for quick checks", "compare",
                        sizes=(40,), seeds=(0, 1), transcoder_count=3, random_draws=10),
        PlacementPreset("oracle-small", "graphs of 10-15 nodes checked against exhaustive search", "compare",
                        base=ORACLE_SMALL, sizes=tuple(range(10, 16)), seeds=tuple(range(5)),
                        transcoder_count=2, exhaustive=True),
        PlacementPreset("fig2-benefit", "direct versus transcoded load as the network grows", "benefit",
                        sizes=SIZES, seeds=(0, 1, 2)),
        PlacementPreset("fig3-small", "blocking mode with tight links, 100-600 nodes", "compare",
                        base=replace(MANY_CLIENTS, capacity=(60.0, 60.0)), sizes=SIZES, seeds=(0, 1),
                        mode="blocking"),
        PlacementPreset("fig5-separation", "separation 0.01 against 0.1 across sizes", "compare",
                        sizes=SIZES, seeds=(0, 1, 2), separations=(0.01, 0.1)),
        PlacementPreset("fig6-clients", "client fraction swept from 1% to 35% at 200 nodes", "compare",
                        sizes=(200,), seeds=(0, 1, 2), client_fractions=(0.01, 0.05, 0.1, 0.2, 0.35)),
        PlacementPreset("ga-nostop", "heuristic against a GA run for 100 generations without stop", "compare",
                        sizes=(100, 150, 200, 250, 300), seeds=(0, 1), ga_generations=100, ga_stop=False,
                        random_draws=10),
        MigrationPreset("table1", "four migration types at 125 and 250 ms RTT, 50 runs each"),
        MigrationPreset("migrate-smoke", "three runs of each type at 125 ms", rtts=(125.0,), reps=3),
    )
}


def get_preset(name: str):
    try:
        return PRESETS[name]
    except KeyError:
        raise ScenarioError("--preset", f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def packaged_scenario(filename: str) -> Scenario:
    import json

    text = resources.files("tcnet.data").joinpath(filename).read_text()
    return parse_scenario(json.loads(text), name=filename.rsplit(".", 1)[0])


def preset_scenarios(preset: PlacementPreset, seed: int = 0, allow_large: bool = False) -> Iterator[Scenario]:
    """Scenarios on the preset grid; ``seed`` offsets every generator seed."""
    if preset.scenario_file is not None:
        yield packaged_scenario(preset.scenario_file)
        return
    fractions = preset.client_fractions or (preset.base.client_fraction,)
    for size in preset.sizes:
        if size > MAX_DESK_NODES and not allow_large:
            raise ScenarioError("--preset", f"{size} nodes exceeds the desk-scale cap of {MAX_DESK_NODES}")
        for cf in fractions:
            for s in preset.seeds:
                spec = replace(preset.base, nodes=size, client_fraction=cf, seed=seed + s)
                yield generate_scenario(spec, name=f"{preset.name}-n{size}-cf{cf:g}-s{seed + s}", mode=preset.mode)


def _evaluate(sc: Scenario, sites) -> tuple[float, int, int]:
    load = network_load(build_routes(sc.graph, sc.demands, sites)).total_load
    adm = admit_demands(sc.graph, sc.demands, sites)
    return load, adm.admitted, len(adm.blocked)


def _client_fraction(sc: Scenario):
    return (sc.generator or {}).get("client_fraction", "")


def placement_row(sc: Scenario, p: Placement, *, n: int, lam=None, seed=None, rep=0, timings=True, solver=None) -> dict:
    load, admitted, blocked = _evaluate(sc, p)
    return {
        "scenario": sc.name,
        "nodes": len(sc.graph.nodes),
        "solver": solver or p.solver,
        "n": n,
        "lambda": _fmt(lam),
        "client_fraction": _fmt(_client_fraction(sc)),
        "mode": sc.mode,
        "seed": _fmt(sc.seed if seed is None else seed),
        "rep": rep,
        "score": _fmt(p.score) if p.score == p.score else "",
        "load": _fmt(load),
        "admitted": admitted,
        "blocked": blocked,
        "runtime_s": _fmt(p.runtime) if timings else "",
    }


def random_mean_row(sc: Scenario, n: int, draws: int, seed: int, timings: bool = True) -> dict:
    """Mean load and admitted count over ``draws`` random placements seeded seed..seed+draws-1."""
    loads, adms, blocks, runtime = [], [], [], 0.0
    for k in range(draws):
        p = place_random(sc.graph, n, seed=seed + k)
        load, admitted, blocked = _evaluate(sc, p)
        loads.append(load)
        adms.append(admitted)
        blocks.append(blocked)
        runtime += p.runtime
    return {
        "scenario": sc.name,
        "nodes": len(sc.graph.nodes),
        "solver": "random-mean",
        "n": n,
        "lambda": "",
        "client_fraction": _fmt(_client_fraction(sc)),
        "mode": sc.mode,
        "seed": seed,
        "rep": 0,
        "score": "",
        "load": _fmt(statistics.fmean(loads)),
        "admitted": _fmt(statistics.fmean(adms)),
        "blocked": _fmt(statistics.fmean(blocks)),
        "runtime_s": _fmt(runtime / draws) if timings else "",
    }


def _n_for(sc: Scenario, n: int) -> int:
    if not 1 <= n <= len(sc.graph.candidates):
        raise InfeasibleScenarioError("--n", f"{sc.name} has {len(sc.graph.candidates)} candidate sites, asked for {n}")
    return n


def run_place(
    scenarios: Iterable[Scenario],
    solver: str,
    n: int | None = None,
    lam: float | None = None,
    seed: int = 0,
    timings: bool = True,
) -> list[dict]:
    rows = []
    for sc in scenarios:
        want = n or sc.solver.transcoder_count
        lam_k = lam if lam is not None else sc.solver.separation
        if solver == "heuristic":
            # asking for more sites than candidates truncates rather than fails
            p = place_heuristic(sc.graph, sc.demands, HeuristicParams(want, lam_k, sc.solver.pool_rule))
            rows.append(placement_row(sc, p, n=len(p), lam=lam_k, seed=seed, timings=timings))
            continue
        k = _n_for(sc, want)
        if solver == "ga":
            ga = GaParams(sc.solver.generations, sc.solver.population, sc.solver.operator_fraction, seed)
            p = place_ga(sc.graph, sc.demands, k, ga, mode=sc.mode)
        elif solver == "random":
            p = place_random(sc.graph, k, seed=seed)
        elif solver == "exhaustive":
            p = place_exhaustive(sc.graph, sc.demands, k, budget=sc.solver.exhaustive_budget, mode=sc.mode)
        else:
            raise ScenarioError("--solver", f"unknown solver {solver!r}")
        rows.append(placement_row(sc, p, n=k, seed=seed, timings=timings))
    return sort_rows(rows)


def compare_scenario(
    sc: Scenario,
    n: int,
    separations: Sequence[float],
    *,
    seed: int = 0,
    reps: int = 1,
    ga_generations: int = 10,
    ga_stop: bool = True,
    random_draws: int = 100,
    exhaustive: bool = False,
    timings: bool = True,
) -> list[dict]:
    """Heuristic first; its load (or admitted count when blocking) is the GA's stop score."""
    k = _n_for(sc, n)
    rows = []
    stop = None
    for lam in separations:
        h = place_heuristic(sc.graph, sc.demands, HeuristicParams(k, lam, sc.solver.pool_rule))
        row = placement_row(sc, h, n=k, lam=lam, seed=seed, timings=timings)
        rows.append(row)
        if stop is None:
            stop = float(row["admitted"]) if sc.mode == "blocking" else float(row["load"])
    for rep in range(reps):
        ga = GaParams(ga_generations, sc.solver.population, sc.solver.operator_fraction, seed + rep)
        g = place_ga(sc.graph, sc.demands, k, ga, stop_score=stop if ga_stop else None, mode=sc.mode)
        rows.append(placement_row(sc, g, n=k, seed=seed + rep, rep=rep, timings=timings,
                                  solver="ga" if ga_stop else "ga-nostop"))
    rows.append(random_mean_row(sc, k, random_draws, seed, timings))
    if exhaustive:
        x = place_exhaustive(sc.graph, sc.demands, k, budget=sc.solver.exhaustive_budget, mode=sc.mode)
        rows.append(placement_row(sc, x, n=k, seed=seed, timings=timings))
    return rows


def run_compare(
    scenarios: Iterable[Scenario],
    preset: PlacementPreset | None = None,
    *,
    n: int | None = None,
    lam: float | None = None,
    seed: int = 0,
    reps: int = 1,
    timings: bool = True,
) -> list[dict]:
    rows = []
    for sc in scenarios:
        if preset is not None:
            seps = (lam,) if lam is not None else preset.separations
            opts = dict(ga_generations=preset.ga_generations, ga_stop=preset.ga_stop,
                        random_draws=preset.random_draws, exhaustive=preset.exhaustive)
            k = n or preset.transcoder_count
        else:
            seps = (lam if lam is not None else sc.solver.separation,)
            opts = dict(ga_generations=sc.solver.generations, random_draws=max(1, sc.solver.random_draws))
            k = n or sc.solver.transcoder_count
        rows.extend(compare_scenario(sc, k, seps, seed=seed, reps=reps, timings=timings, **opts))
    return sort_rows(rows)


def benefit_row(sc: Scenario, n: int, lam: float = 0.01, seed=None) -> dict:
    """Direct against transcoded load for the heuristic placement of ``sc``."""
    k = _n_for(sc, n)
    p = place_heuristic(sc.graph, sc.demands, HeuristicParams(k, lam, sc.solver.pool_rule))
    plan = build_routes(sc.graph, sc.demands, p)
    transcoded = network_load(plan).total_load
    direct = network_load(build_direct_routes(sc.graph, sc.demands)).total_load
    return {
        "scenario": sc.name,
        "nodes": len(sc.graph.nodes),
        "seed": _fmt(sc.seed if seed is None else seed),
        "n": k,
        "lambda": _fmt(lam),
        "demands": len(sc.demands),
        "min_shared": min_shared_demands(sc, plan.assignment),
        "direct_load": _fmt(direct),
        "transcoded_load": _fmt(transcoded),
        "ratio": _fmt(transcoded / direct) if direct else "",
    }


def min_shared_demands(sc: Scenario, assignment: Sequence) -> int:
    """Smallest, over transcoders in use, of their largest same-content demand group."""
    groups: dict = {}
    for d, site in zip(sc.demands, assignment):
        groups.setdefault(site, {}).setdefault((d.source, d.content), 0)
        groups[site][(d.source, d.content)] += 1
    return min((max(g.values()) for g in groups.values()), default=0)


def run_benefit(scenarios: Iterable[Scenario], n: int | None = None, lam: float | None = None, seed=None) -> list[dict]:
    rows = []
    for sc in scenarios:
        rows.append(benefit_row(sc, n or sc.solver.transcoder_count, lam if lam is not None else sc.solver.separation, seed))
    return sort_rows(rows)


def run_migrate(
    base: SimConfig,
    types: Sequence[str],
    rtts: Sequence[float],
    reps: int,
    seed: int = 0,
    on_deltas: Callable[[dict], None] | None = None,
) -> list[SweepRow]:
    """Gap summary rows; ``on_deltas`` receives the packet-delta rows of each cell's first run."""
    def record(kind, cfg, trace, report):
        if on_deltas is None or cfg.arp_residual_seed != seed:
            return
        for t_us, delta_us, mac in trace.packet_deltas():
            on_deltas({
                "type": kind,
                "rtt_ms": _fmt(cfg.link_rtt),
                "seed": cfg.arp_residual_seed,
                "t_s": f"{t_us / 1e6:.6f}",
                "delta_s": f"{delta_us / 1e6:.6f}",
                "src_mac": mac,
            })

    configs = [replace(base, link_rtt=float(r)) for r in rtts]
    return sweep(configs, reps, types, base_seed=seed, on_run=record)


def sort_rows(rows: list[dict]) -> list[dict]:
    return sorted(rows, key=lambda r: tuple(str(r.get(k, "")) for k in ("scenario", "solver", "lambda", "rep")))


def write_rows(rows: Sequence[dict], fields: Sequence[str], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


__all__ = [
    "BENEFIT_FIELDS",
    "DELTA_FIELDS",
    "MAX_DESK_NODES",
    "ORACLE_SMALL",
    "MANY_CLIENTS",
    "PRESETS",
    "SOLVER_FIELDS",
    "SWEEP_CSV_FIELDS",
    "MigrationPreset",
    "PlacementPreset",
    "benefit_row",
    "compare_scenario",
    "get_preset",
    "min_shared_demands",
    "packaged_scenario",
    "preset_scenarios",
    "random_mean_row",
    "run_benefit",
    "run_compare",
    "run_migrate",
    "run_place",
    "sort_rows",
    "write_rows",
]
