"""Random flow DAGs for property tests: every route walks node ids upwards."""

import random

from cryptomaze.pcn import from_edges
from cryptomaze.routing import PathSet, assign_timeouts, paths_to_edge_set


def random_flow_dag(rng: random.Random, max_nodes: int = 12, fee: int = 0):
    n = rng.randint(3, max_nodes)
    sink = n - 1
    n_paths = rng.randint(1, 4)
    routes = set()
    for _ in range(n_paths * 3):
        inner = sorted(rng.sample(range(1, sink), rng.randint(1, min(4, sink - 1))))
        routes.add((0, *inner, sink))
        if len(routes) == n_paths:
            break
    routes = sorted(routes)
    edges = {e for r in routes for e in zip(r, r[1:])}
    graph = from_edges([(u, v, 10**12, 10**12) for u, v in sorted(edges)],
                       {i: (0 if i in (0, sink) else fee) for i in range(n)})
    amounts = tuple(rng.randint(1, 1000) for _ in routes)
    paths = PathSet(0, sink, sum(amounts), tuple(routes), amounts)
    pc = assign_timeouts(paths_to_edge_set(paths, graph), t_end=100, delta_chain=10)
    return graph, paths, pc
