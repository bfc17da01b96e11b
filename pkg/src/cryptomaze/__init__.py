"""Atomic multi-path payments over payment channel networks, with baselines and a simulator."""

from .engine import Behavior, SimConfig, run_payment, run_simulation
from .pcn import PaymentGraph, coins, generate_ba, load_snapshot
from .routing import EdgeSet, PathSet, find_paths, route_payment

__version__ = "0.1.0"

__all__ = [
    "Behavior", "EdgeSet", "PathSet", "PaymentGraph", "SimConfig", "coins", "find_paths",
    "generate_ba", "load_snapshot", "route_payment", "run_payment", "run_simulation",
]
