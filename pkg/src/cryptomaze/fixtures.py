"""Small hand-built topologies shared by tests, the CLI and the docs."""

from __future__ import annotations

from .pcn import PaymentGraph, coins, from_edges

M, A, B, C, D, N = range(6)
EXAMPLE_NAMES = {M: "M", A: "A", B: "B", C: "C", D: "D", N: "N"}
EXAMPLE_VALUE = coins("5.1")
EXAMPLE_FEE = coins("0.1")


def diamond_graph() -> PaymentGraph:
    """M pays N through a split at A and a merge at D (every intermediary charges 0.1).

    Capacities are tight enough that no single route carries 5.1 units.
    """
    fees = {M: 0, A: EXAMPLE_FEE, B: EXAMPLE_FEE, C: EXAMPLE_FEE, D: EXAMPLE_FEE, N: 0}
    back = coins("1")
    edges = [
        (M, A, coins("6"), back),
        (A, B, coins("2.7"), back),
        (A, C, coins("2.7"), back),
        (B, D, coins("2.6"), back),
        (C, D, coins("2.6"), back),
        (D, N, coins("6"), back),
    ]
    return from_edges(edges, fees, EXAMPLE_NAMES)


def chain_graph(hops: int, capacity: int = coins("10"), fee: int = coins("0.01")) -> PaymentGraph:
    """Nodes ``0..hops`` joined in a line; endpoints charge no fee."""
    fees = {i: (0 if i in (0, hops) else fee) for i in range(hops + 1)}
    return from_edges([(i, i + 1, capacity, capacity) for i in range(hops)], fees)
