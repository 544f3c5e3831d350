"""Transcoder placement solvers.

``place_heuristic`` is the separation-distance greedy heuristic: it seeds
with the best single site by degree-normalised weighted distance, then adds
sites one at a time from a pool of candidates kept at least a separation
distance away from the sites already chosen. ``place_ga`` is the genetic
algorithm baseline; ``place_random`` and ``place_exhaustive`` are the
reference points used to judge both.
"""

from __future__ import annotations

import itertools
import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

from .model import (
    INF,
    DemandSet,
    ModelError,
    NetworkGraph,
    NodeId,
    PathCache,
    admit_demands,
    build_routes,
    degree,
    network_load,
)

SOLVERS = ("heuristic", "ga", "random", "exhaustive")
MODES = ("non-blocking", "blocking")


class ParameterError(ModelError):
    pass


class BudgetExceededError(ParameterError):
    pass


@dataclass(frozen=True)
class HeuristicParams:
    transcoder_count: int
    separation: float = 0.01
    # "some": a site joins the pool when it is farther than the separation
    # distance from at least one chosen site; "all": from every chosen site.
    pool_rule: str = "some"

    def __post_init__(self):
        if self.transcoder_count < 1:
            raise ParameterError("transcoder_count must be >= 1")
        if not 0 < self.separation <= 0.1:
            raise ParameterError(f"separation must lie in (0, 0.1], got {self.separation}")
        if self.pool_rule not in ("some", "all"):
            raise ParameterError(f"unknown pool_rule {self.pool_rule!r}")


@dataclass(frozen=True)
class GaParams:
    generations: int = 10
    population: int = 50
    operator_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.generations < 0 or self.population < 2:
            raise ParameterError("need generations >= 0 and population >= 2")
        if not 0 <= self.operator_fraction <= 1:
            raise ParameterError("operator_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class Placement:
    transcoders: tuple
    solver: str
    score: float = math.nan
    runtime: float = field(default=0.0, compare=False)
    truncated: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.transcoders)) != len(self.transcoders):
            raise ParameterError(f"duplicate transcoder sites in {self.transcoders!r}")
        if self.solver not in SOLVERS:
            raise ParameterError(f"unknown solver {self.solver!r}")

    def __len__(self):
        return len(self.transcoders)


def _candidates(graph: NetworkGraph) -> list:
    return sorted(graph.candidates)


def score_location(graph: NetworkGraph, a: NodeId, demands: DemandSet, *, paths: PathCache | None = None) -> float:
    """Weighted distance from ``a`` to every demand destination, divided by degree(a)."""
    if a not in graph.candidates:
        raise ParameterError(f"{a!r} is not a candidate location")
    deg = degree(graph, a)
    if deg == 0:
        return INF
    dist = (paths or PathCache(graph)).distances(a)
    return sum(dist[d.destination] * d.bitrate for d in demands) / deg


def group_score(graph: NetworkGraph, locations: Sequence[NodeId], demands: DemandSet, *, paths: PathCache | None = None) -> float:
    """Sum of weighted distances from each destination to its nearest location (no degree divisor)."""
    if not locations:
        raise ParameterError("group_score needs at least one location")
    paths = paths or PathCache(graph)
    tables = [paths.distances(loc) for loc in sorted(locations)]
    total = 0.0
    for d in demands:
        t = d.destination
        total += min(tab[t] for tab in tables) * d.bitrate
    return total


def _pool(paths: PathCache, cands: list, chosen: list, sep: int, rule: str) -> list:
    if sep <= 0:
        return [a for a in cands if a not in chosen]
    tables = [paths.distances(k) for k in chosen]
    test = any if rule == "some" else all
    return [a for a in cands if a not in chosen and test(tab[a] > sep for tab in tables)]


def place_heuristic(graph: NetworkGraph, demands: DemandSet, params: HeuristicParams) -> Placement:
    cands = _candidates(graph)
    if not cands:
        raise ParameterError("graph has no candidate locations")
    start = time.perf_counter()
    paths = PathCache(graph)

    first, min_score = cands[0], INF
    for a in cands:
        s = score_location(graph, a, demands, paths=paths)
        if s < min_score:
            first, min_score = a, s
    chosen = [first]

    n = min(params.transcoder_count, len(cands))
    sep = math.floor(params.separation * len(graph.nodes))
    pool_sizes = []
    for _ in range(n - 1):
        pool = _pool(paths, cands, chosen, sep, params.pool_rule)
        while not pool and sep > 0:
            sep -= 1
            pool = _pool(paths, cands, chosen, sep, params.pool_rule)
        pool_sizes.append(len(pool))
        best_loc, best = pool[0], INF
        for j in pool:
            g = group_score(graph, chosen + [j], demands, paths=paths)
            if g < best:
                best_loc, best = j, g
        chosen.append(best_loc)

    score = group_score(graph, chosen, demands, paths=paths) if demands else 0.0
    return Placement(
        tuple(chosen),
        "heuristic",
        score=score,
        runtime=time.perf_counter() - start,
        truncated=params.transcoder_count > len(cands),
        meta={"separation": params.separation, "pool_sizes": pool_sizes, "final_sep": sep},
    )


def _cost_function(graph: NetworkGraph, demands: DemandSet, mode: str, paths: PathCache):
    """Cost to minimise: network load, or minus the admitted count when blocking."""
    if mode not in MODES:
        raise ParameterError(f"unknown mode {mode!r}")
    cache: dict = {}

    def cost(chromosome) -> float:
        key = frozenset(chromosome)
        c = cache.get(key)
        if c is None:
            if mode == "blocking":
                c = -float(admit_demands(graph, demands, chromosome, paths=paths).admitted)
            else:
                c = network_load(build_routes(graph, demands, chromosome, paths=paths)).total_load
            cache[key] = c
        return c

    return cost


def place_ga(
    graph: NetworkGraph,
    demands: DemandSet,
    n: int,
    params: GaParams = GaParams(),
    stop_score: float | None = None,
    mode: str = "non-blocking",
) -> Placement:
    """Genetic algorithm over length-``n`` site vectors.

    Fitness is network load (non-blocking) or admitted demand count
    (blocking). The top half survives each generation; the other half is bred
    by single-point crossover, with any child holding a repeated site thrown
    away and replaced by a fresh random chromosome. A random
    ``operator_fraction`` of the non-elite population then has one gene
    swapped for an unused candidate. The search stops after
    ``params.generations`` or as soon as the best fitness reaches
    ``stop_score`` (a load ceiling, or an admitted-count floor when blocking).
    """
    cands = _candidates(graph)
    if not 1 <= n <= len(cands):
        raise ParameterError(f"n={n} must lie in [1, {len(cands)}]")
    start = time.perf_counter()
    rng = random.Random(params.seed)
    paths = PathCache(graph)
    cost = _cost_function(graph, demands, mode, paths)
    stop = None
    if stop_score is not None:
        stop = -stop_score if mode == "blocking" else stop_score

    def fresh():
        return tuple(rng.sample(cands, n))

    if math.comb(len(cands), n) == 1:
        population = [tuple(cands)]
    else:
        population = [fresh() for _ in range(params.population)]
    population.sort(key=cost)
    history = [cost(population[0])]
    generation = 0
    discarded = 0
    size = len(population)
    while generation < params.generations and size > 1 and not (stop is not None and history[-1] <= stop):
        generation += 1
        parents = population[: max(2, size // 2)]
        offspring = []
        while len(parents) + len(offspring) < size:
            p1, p2 = rng.sample(parents, 2)
            if n > 1:
                cut = rng.randrange(1, n)
                child = p1[:cut] + p2[cut:]
            else:
                child = p1
            if len(set(child)) != n:
                discarded += 1
                child = fresh()
            offspring.append(child)
        population = parents + offspring
        n_mut = round(params.operator_fraction * size)
        for i in rng.sample(range(1, size), min(n_mut, size - 1)):
            ch = population[i]
            unused = [c for c in cands if c not in ch]
            if not unused:
                continue
            g = rng.randrange(n)
            population[i] = ch[:g] + (rng.choice(unused),) + ch[g + 1 :]
        population.sort(key=cost)
        history.append(cost(population[0]))

    best = population[0]
    best_cost = cost(best)
    score = -best_cost if mode == "blocking" else best_cost
    return Placement(
        tuple(best),
        "ga",
        score=score,
        runtime=time.perf_counter() - start,
        meta={
            "generations": generation,
            "history": history,
            "discarded": discarded,
            "mode": mode,
            "stopped_early": stop is not None and best_cost <= stop,
        },
    )


def place_random(graph: NetworkGraph, n: int, seed: int = 0) -> Placement:
    cands = _candidates(graph)
    if not 1 <= n <= len(cands):
        raise ParameterError(f"n={n} must lie in [1, {len(cands)}]")
    start = time.perf_counter()
    sites = tuple(random.Random(seed).sample(cands, n))
    return Placement(sites, "random", runtime=time.perf_counter() - start, meta={"seed": seed})


def place_exhaustive(
    graph: NetworkGraph,
    demands: DemandSet,
    n: int,
    budget: int = 10**5,
    mode: str = "non-blocking",
) -> Placement:
    """Best ``n``-subset of candidates by enumeration; lowest-id subset wins ties."""
    cands = _candidates(graph)
    if not 1 <= n <= len(cands):
        raise ParameterError(f"n={n} must lie in [1, {len(cands)}]")
    count = math.comb(len(cands), n)
    if count > budget:
        raise BudgetExceededError(f"C({len(cands)}, {n}) = {count} subsets exceeds budget {budget}")
    start = time.perf_counter()
    cost = _cost_function(graph, demands, mode, PathCache(graph))
    best, best_cost = None, INF
    for combo in itertools.combinations(cands, n):
        c = cost(combo)
        if c < best_cost:
            best, best_cost = combo, c
    score = -best_cost if mode == "blocking" else best_cost
    return Placement(
        tuple(best),
        "exhaustive",
        score=score,
        runtime=time.perf_counter() - start,
        meta={"evaluated": count, "mode": mode},
    )
