import random

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cryptomaze.fixtures import EXAMPLE_NAMES, EXAMPLE_VALUE, M, N, chain_graph, diamond_graph
from cryptomaze.pcn import coins, from_edges, generate_ba
from cryptomaze.routing import (
    InconsistentFlows, NoRoute, PathSet, assign_timeouts, find_paths, paths_to_edge_set,
    route_payment,
)

NAME = EXAMPLE_NAMES


def _named(edge):
    return NAME[edge[0]], NAME[edge[1]]


@pytest.fixture
def example():
    g = diamond_graph()
    return route_payment(g, M, N, EXAMPLE_VALUE, t_end=100, delta_chain=10)


def test_example_flows(example):
    _, pc = example
    assert {_named(e): f for e, f in pc.flow.items()} == oracles.EXAMPLE_FLOWS
    assert pc.conservation_violations() == []
    assert pc.total_fees() == coins("0.4")


def test_example_edge_order(example):
    _, pc = example
    assert [_named(e) for e in pc.edges] == oracles.EXAMPLE_EDGE_ORDER


def test_example_timeouts(example):
    _, pc = example
    assert {_named(e): (t - 100) // 10 for e, t in pc.timeout.items()} == oracles.EXAMPLE_TIMEOUT_OFFSETS


def test_example_needs_two_paths(example):
    paths, _ = example
    assert len(paths.paths) == 2
    assert sorted(paths.amounts) == [coins("2.5"), coins("2.6")]


def test_single_path_when_capacity_allows():
    paths = find_paths(chain_graph(4), 0, 4, coins("1"))
    assert paths.paths == ((0, 1, 2, 3, 4),)


def test_no_route():
    with pytest.raises(NoRoute):
        find_paths(chain_graph(3), 0, 3, coins("100"))
    with pytest.raises(ValueError):
        find_paths(chain_graph(3), 0, 0, 1)


def test_pathset_validation():
    with pytest.raises(ValueError):
        PathSet(0, 2, 5, ((0, 1, 2),), (4,))
    with pytest.raises(ValueError):
        PathSet(0, 2, 5, ((0, 1),), (5,))


def test_crossing_routes_rejected():
    g = from_edges([(0, 1, 10, 10), (1, 2, 10, 10), (0, 2, 10, 10), (2, 3, 10, 10),
                    (1, 3, 10, 10)], {i: 0 for i in range(4)})
    crossing = PathSet(0, 3, 2, ((0, 1, 2, 3), (0, 2, 1, 3)), (1, 1))
    with pytest.raises(InconsistentFlows):
        paths_to_edge_set(crossing, g)


def test_revisiting_route_rejected():
    g = from_edges([(0, 1, 10, 10), (1, 2, 10, 10)], {i: 0 for i in range(3)})
    with pytest.raises(InconsistentFlows):
        paths_to_edge_set(PathSet(0, 2, 1, ((0, 1, 0, 1, 2),), (1,)), g)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.sampled_from(["0.02", "0.05", "0.1"]))
def test_ba_routes_conserve_flow(seed, amount):
    g = generate_ba(60, 2, seed)
    rng = random.Random(seed)
    s, r = rng.sample(sorted(g.nodes), 2)
    try:
        paths, pc = route_payment(g, s, r, coins(amount), t_end=50, delta_chain=5)
    except NoRoute:
        return
    assert pc.conservation_violations() == []
    assert sum(pc.flow[(b, r)] for b in pc.predecessors(r)) == coins(amount)
    for (u, v), f in pc.flow.items():
        assert f <= g.capacity[(u, v)]
        for k in pc.successors(v):
            assert pc.timeout[(u, v)] >= pc.timeout[(v, k)] + 5


def test_direct_channel_single_hop():
    g = from_edges([(0, 1, 100, 100), (1, 2, 100, 100), (0, 2, 100, 100)], {0: 0, 1: 5, 2: 0})
    assert find_paths(g, 0, 2, 50).paths == ((0, 2),)


def _max_flow(graph, s, t):
    import networkx as nx
    flow = nx.DiGraph()
    flow.add_nodes_from(graph.nodes)
    for (u, v), cap in graph.capacity.items():
        flow.add_edge(u, v, capacity=cap)
    return nx.maximum_flow_value(flow, s, t)


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_never_routes_beyond_max_flow(seed):
    rng = random.Random(seed)
    edges = {tuple(sorted(rng.sample(range(10), 2))) for _ in range(18)}
    g = from_edges([(u, v, rng.randint(0, 50), rng.randint(0, 50)) for u, v in sorted(edges)],
                   {i: 0 for i in range(10)})
    cap = _max_flow(g, 0, 9)
    with pytest.raises(NoRoute):
        find_paths(g, 0, 9, cap + 1)
    if cap:
        try:
            paths = find_paths(g, 0, 9, cap)
        except NoRoute:
            return  # greedy splitting may fall short of the optimum
        assert sum(paths.amounts) == cap
