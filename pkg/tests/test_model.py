import itertools
import math

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import HD, SD, line_graph, random_connected, random_scenario, scenarios
from tcnet.model import (
    INF,
    LOAD_CSV_FIELDS,
    CodecRate,
    Demand,
    InvalidNodeError,
    LoadReport,
    ModelError,
    NetworkGraph,
    NoTranscoderError,
    PathCache,
    Route,
    RoutePlan,
    admit_demands,
    build_direct_routes,
    build_routes,
    degree,
    hop_distances,
    network_load,
)


def audit_load(plan: RoutePlan) -> float:
    """Independent load recomputation straight from node sequences."""
    total = 0.0
    for route in list(plan.trunks.values()) + [r for r in plan.leaves if r is not None]:
        total += route.rate * (len(route.nodes) - 1)
    return total


# -- graph construction ---------------------------------------------------------

def test_graph_rejects_bad_edges():
    with pytest.raises(ModelError):
        NetworkGraph.build([(0, 0)])
    with pytest.raises(ModelError):
        NetworkGraph.build([(0, 1, 0.0)])
    with pytest.raises(ModelError):
        NetworkGraph.build([(0, 1), (1, 0)])
    with pytest.raises(InvalidNodeError):
        NetworkGraph.build([(0, 1)], clients=[7])


def test_sources_and_candidates_may_overlap_clients():
    g = NetworkGraph.build([(0, 1)], sources=[0], clients=[0, 1], candidates=[0, 1])
    assert g.sources <= g.clients and g.candidates == g.clients


def test_connectivity_check():
    assert line_graph(3).is_connected()
    assert not NetworkGraph.build([(0, 1), (2, 3)]).is_connected()


# -- hop distances --------------------------------------------------------------

def test_hop_distances_single_node():
    g = NetworkGraph(nodes=("a",), capacity={})
    assert hop_distances(g, "a") == {"a": 0}


def test_hop_distances_path():
    g = NetworkGraph.build([("a", "b"), ("b", "c")])
    assert hop_distances(g, "a") == {"a": 0, "b": 1, "c": 2}


def test_hop_distances_unknown_origin():
    with pytest.raises(InvalidNodeError):
        hop_distances(line_graph(3), 99)


def test_hop_distances_unreachable_is_inf():
    g = NetworkGraph.build([(0, 1), (2, 3)])
    assert hop_distances(g, 0)[3] == INF


@pytest.mark.parametrize("seed", range(5))
def test_hop_distances_match_floyd_warshall(seed):
    nxg = random_connected(12, 0.25, seed)
    g = NetworkGraph.build(sorted(nxg.edges), nodes=range(12))
    fw = nx.floyd_warshall(nxg)
    for u in g.nodes:
        d = hop_distances(g, u)
        assert all(d[v] == fw[u][v] for v in g.nodes)


@given(st.integers(0, 10_000), st.integers(2, 14))
@settings(max_examples=40, deadline=None)
def test_hop_distances_triangle_inequality(seed, n):
    g = NetworkGraph.build(sorted(random_connected(n, 0.3, seed).edges), nodes=range(n))
    tables = {u: hop_distances(g, u) for u in g.nodes}
    for u in g.nodes:
        assert tables[u][u] == 0
        for v, w in itertools.product(g.nodes, repeat=2):
            assert tables[u][w] <= tables[u][v] + tables[v][w]


# -- degree ---------------------------------------------------------------------

def test_degree_examples():
    # the "triangle" example counts 3: a triangle plus a pendant on the node asked about
    g = NetworkGraph.build([(0, 1), (1, 2), (2, 0), (0, 3)])
    assert degree(g, 0) == 3
    assert degree(line_graph(3), 1) == 2
    star = NetworkGraph.build([(0, i) for i in range(1, 8)])
    assert degree(star, 0) == 7
    with pytest.raises(InvalidNodeError):
        degree(star, 42)


# -- routing ---------------------------------------------------------------------

def test_shortest_path_tie_break_is_lexicographic():
    # two equal-length routes 0-1-3 and 0-2-3; the smaller node sequence wins
    g = NetworkGraph.build([(0, 2), (2, 3), (0, 1), (1, 3)])
    assert PathCache(g).path(0, 3) == (0, 1, 3)


def test_transcoder_on_path_concatenates_to_direct_route():
    g = line_graph(4, sources=[0], clients=[3], candidates=[2])
    d = [Demand(0, 3, HD)]
    plan = build_routes(g, d, [2])
    trunk = plan.trunks[(0, 2, "default")]
    assert trunk.nodes + plan.leaves[0].nodes[1:] == build_direct_routes(g, d).leaves[0].nodes


def test_two_demands_share_one_trunk_at_max_rate():
    g = NetworkGraph.build([(0, 1), (1, 2), (2, 3), (2, 4)], sources=[0], clients=[3, 4], candidates=[2])
    plan = build_routes(g, [Demand(0, 3, HD, "m"), Demand(0, 4, SD, "m")], [2])
    assert len(plan.trunks) == 1
    assert plan.trunks[(0, 2, "m")].rate == 100.0
    assert [r.rate for r in plan.leaves] == [100.0, 60.0]


def test_empty_placement_raises():
    g = line_graph(3, sources=[0], clients=[2], candidates=[1])
    with pytest.raises(NoTranscoderError):
        build_routes(g, [Demand(0, 2, HD)], [])


@pytest.mark.parametrize("seed", range(5))
def test_assignment_matches_exhaustive_nearest_scan(seed):
    graph, demands = random_scenario(seed, n=15, n_cand=6, n_cli=6, n_dem=10)
    sites = sorted(graph.candidates)[:3]
    plan = build_routes(graph, demands, sites)
    nxg = nx.Graph(list(graph.capacity))
    for d, got in zip(demands, plan.assignment):
        dist = {s: nx.shortest_path_length(nxg, s, d.destination) for s in sites}
        best = min(dist.values())
        assert got == min(s for s in sites if dist[s] == best)


def test_direct_routes_do_not_share():
    g = NetworkGraph.build([(0, 1), (1, 2), (1, 3)], sources=[0], clients=[2, 3])
    plan = build_direct_routes(g, [Demand(0, 2, HD), Demand(0, 3, HD)])
    assert plan.trunks == {} and len(plan.leaves) == 2
    g3 = line_graph(4, sources=[0], clients=[3])
    assert build_direct_routes(g3, [Demand(0, 3, HD)]).leaves[0].hops == 3


@pytest.mark.parametrize("seed", range(5))
def test_direct_load_not_below_transcoded_when_clients_share(seed):
    # 20 demands, one content, clients behind a single transcoder site
    graph, demands = random_scenario(seed, n=12, n_cand=4, n_cli=4, n_dem=20, contents=1)
    hub = min(graph.candidates, key=lambda a: sum(PathCache(graph).dist(a, d.destination) for d in demands))
    src = demands[0].source
    if PathCache(graph).dist(src, hub) == 0:
        pytest.skip("source is the hub; no trunk to share")
    direct = network_load(build_direct_routes(graph, demands)).total_load
    # route via the hub only where it lies on a shortest source->client path
    on_path = [d for d in demands
               if PathCache(graph).dist(src, hub) + PathCache(graph).dist(hub, d.destination)
               == PathCache(graph).dist(src, d.destination)]
    if len(on_path) < 2:
        pytest.skip("fewer than two clients sit behind the hub")
    assert network_load(build_routes(graph, on_path, [hub])).total_load <= network_load(
        build_direct_routes(graph, on_path)).total_load <= direct


# -- load ------------------------------------------------------------------------

def test_load_single_demand_three_edges():
    plan = RoutePlan((Route((0, 1, 2, 3), 100.0),), (None,), {})
    assert network_load(plan).total_load == 300


def test_load_empty_plan():
    assert network_load(RoutePlan((), (), {})).total_load == 0


def test_load_trunk_plus_leaves_is_420():
    trunk = Route((0, 1, 2), 100.0)
    plan = RoutePlan((Route((2, 3), 100.0), Route((2, 4, 5), 60.0)), (2, 2), {(0, 2, "m"): trunk})
    report = network_load(plan)
    assert report.total_load == 420
    assert report.edge_load[(0, 1)] == 100 and report.edge_load[(4, 5)] == 60


@given(scenarios())
@settings(max_examples=60, deadline=None)
def test_load_matches_independent_audit(sc):
    graph, demands = sc
    sites = sorted(graph.candidates)[:2]
    plan = build_routes(graph, demands, sites)
    assert network_load(plan).total_load == pytest.approx(audit_load(plan))
    for route in plan.streams():
        assert len(set(route.nodes)) == len(route.nodes)  # simple path
        assert all(e in graph.capacity for e in route.edges)


@given(scenarios())
@settings(max_examples=40, deadline=None)
def test_build_routes_deterministic(sc):
    graph, demands = sc
    sites = sorted(graph.candidates)[:2]
    assert build_routes(graph, demands, sites) == build_routes(graph, demands, list(reversed(sites)))


@given(st.integers(0, 10_000), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_trunk_dedup_second_demand_cheaper_than_direct(seed, trunk_len):
    # source 0 -> ... -> transcoder T, then two client branches off T
    t = trunk_len
    edges = [(i, i + 1) for i in range(t)] + [(t, 100), (t, 200), (200, 201)]
    g = NetworkGraph.build(edges, sources=[0], clients=[100, 201], candidates=[t])
    first = Demand(0, 100, HD, "m")
    second = Demand(0, 201, [HD, SD][seed % 2], "m")
    before = network_load(build_routes(g, [first], [t])).total_load
    after = network_load(build_routes(g, [first, second], [t])).total_load
    direct_second = network_load(build_direct_routes(g, [second])).total_load
    assert after - before < direct_second


# -- admission -------------------------------------------------------------------

def test_admit_single_demand():
    g = line_graph(3, sources=[0], clients=[2], candidates=[1])
    r = admit_demands(g, [Demand(0, 2, HD)], [1])
    assert r.admitted == 1 and r.blocked == ()


def test_admit_bottleneck_blocks():
    g = NetworkGraph.build([(0, 1, 1e4), (1, 2, 50.0)], sources=[0], clients=[2], candidates=[1])
    r = admit_demands(g, [Demand(0, 2, HD)], [1])
    assert r.admitted == 0 and r.blocked == (0,)


def test_admit_unreachable_is_blocked_not_error():
    g = NetworkGraph.build([(0, 1), (2, 3)], sources=[0], clients=[3], candidates=[1])
    assert admit_demands(g, [Demand(0, 3, HD)], [1]).admitted == 0


def recheck_capacity(graph, demands, placement, report):
    """Rebuild the admitted streams from scratch and check capacity edge by edge."""
    admitted = [d for i, d in enumerate(demands) if i not in set(report.blocked)]
    if not admitted:
        return {}
    if placement:
        plan = build_routes(graph, admitted, placement)
    else:
        plan = build_direct_routes(graph, admitted)
    load = {}
    for route in plan.streams():
        for e in route.edges:
            load[e] = load.get(e, 0.0) + route.rate
    for e, v in load.items():
        assert v <= graph.capacity[e] + 1e-9, (e, v)
    return load


@pytest.mark.parametrize("seed", range(10))
def test_admission_recheck_oracle(seed):
    graph, demands = random_scenario(seed, n=8, p=0.4, n_cand=3, n_cli=4, n_dem=10, capacity=30.0)
    sites = sorted(graph.candidates)[:2]
    report = admit_demands(graph, demands, sites)
    assert report.admitted + len(report.blocked) == len(demands)
    load = recheck_capacity(graph, demands, sites, report)
    assert load == pytest.approx(report.edge_load)


@given(scenarios())
@settings(max_examples=60, deadline=None)
def test_admission_never_exceeds_capacity(sc):
    graph, demands = sc
    tight = NetworkGraph.build([(a, b, 20.0) for a, b in graph.capacity], nodes=graph.nodes,
                               sources=graph.sources, clients=graph.clients, candidates=graph.candidates)
    report = admit_demands(tight, demands, sorted(tight.candidates)[:2])
    for e, v in report.edge_load.items():
        assert v <= tight.capacity[e] + 1e-9


def test_load_report_csv_row():
    row = LoadReport(420.0, {}, 2, (3,)).csv_row("s", "heuristic")
    assert tuple(row) == LOAD_CSV_FIELDS
    assert row == {"scenario": "s", "solver": "heuristic", "total_load": "420", "admitted": 2, "blocked": 1}


def test_codec_rate_positive():
    with pytest.raises(ModelError):
        CodecRate("bad", 0.0)
    assert math.isclose(Demand(0, 1, HD).bitrate, 100.0)
