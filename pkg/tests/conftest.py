import random

import networkx as nx
import pytest
from hypothesis import strategies as st

from tcnet.model import CodecRate, Demand, NetworkGraph

HD = CodecRate("HD", 100.0)
SD = CodecRate("SD", 60.0)


def line_graph(n, **roles):
    """Path 0-1-...-(n-1) with unit capacity 1e4 unless overridden."""
    return NetworkGraph.build([(i, i + 1) for i in range(n - 1)], nodes=range(n), **roles)


def random_connected(n, p, seed):
    g = nx.gnp_random_graph(n, p, seed=seed)
    heads = sorted(min(c) for c in nx.connected_components(g))
    g.add_edges_from(zip(heads, heads[1:]))
    return g


def random_scenario(seed, n=12, p=0.3, n_cand=5, n_cli=5, n_dem=10, contents=2, capacity=1e4):
    """Random connected graph with roles and demands, all from one seed."""
    rng = random.Random(seed)
    g = random_connected(n, p, seed)
    nodes = list(range(n))
    src = rng.choice(nodes)
    clients = rng.sample([v for v in nodes if v != src], n_cli)
    cands = rng.sample(nodes, n_cand)
    graph = NetworkGraph.build(
        sorted(g.edges), nodes=nodes, sources=[src], clients=clients, candidates=cands,
        default_capacity=capacity,
    )
    codecs = (CodecRate("SD", 3.0), CodecRate("HD", 8.0), CodecRate("4K", 25.0))
    demands = [
        Demand(src, rng.choice(clients), rng.choice(codecs), f"c{rng.randrange(contents)}")
        for _ in range(n_dem)
    ]
    return graph, demands


@st.composite
def scenarios(draw, max_nodes=10):
    seed = draw(st.integers(0, 10_000))
    n = draw(st.integers(3, max_nodes))
    n_cand = draw(st.integers(1, n))
    n_cli = draw(st.integers(1, n - 1))
    n_dem = draw(st.integers(1, 12))
    return random_scenario(seed, n=n, p=0.35, n_cand=n_cand, n_cli=n_cli, n_dem=n_dem)


@pytest.fixture
def tiny_paths():
    return line_graph(4, sources=[0], clients=[3], candidates=[1, 2])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
