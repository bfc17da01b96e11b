"""Experiment driver behind the ``bench`` command."""

from __future__ import annotations

import csv
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .baselines import DEFAULT_PROOF_BYTES, run_amp, run_htlc, run_mh_htlc
from .engine import CryptoMazeRun, KeyDirectory, SimConfig, longest_route, default_t_end
from .fixtures import M, N, chain_graph, diamond_graph
from .pcn import PaymentGraph, coins, generate_ba, load_snapshot
from .routing import NoRoute, PathSet, assign_timeouts, find_paths, paths_to_edge_set

PROTOCOLS = ("cryptomaze", "htlc", "amp", "mhhtlc")
CSV_COLUMNS = ("protocol", "n_nodes", "amount", "ttp_ms", "sim_ticks", "bytes_total",
               "n_contracts", "n_shared_edges", "outcome", "routing_ms", "latency_ms", "n_paths",
               "trial", "source", "sink")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: str
    amounts: list[int]
    trials: int = 1
    protocols: tuple[str, ...] = ("cryptomaze",)
    seed: int = 0
    delta: int = 1
    Delta: int = 10
    t_end: int | None = None
    out: str | None = None
    workers: int = 1
    lock_mechanism: str = "point"
    proof_bytes: int = DEFAULT_PROOF_BYTES
    max_paths: int = 16
    pair: tuple[int, int] | None = None
    tick_ms: float = 0.0

    def __post_init__(self):
        if self.pair is None and self.graph == "fixture:diamond":
            self.pair = (M, N)
        if not self.amounts or any(a <= 0 for a in self.amounts):
            raise ConfigError("amounts must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.protocols:
            raise ConfigError("at least one protocol is required")
        unknown = set(self.protocols) - set(PROTOCOLS)
        if unknown:
            raise ConfigError(f"unknown protocols {sorted(unknown)}")
        if self.tick_ms < 0:
            raise ConfigError("tick_ms must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.sim_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(delta=self.delta, Delta=self.Delta, t_end=self.t_end,
                         seed=self.seed if seed is None else seed,
                         lock_mechanism=self.lock_mechanism, max_paths=self.max_paths)


@dataclass
class MetricsRow:
    protocol: str
    n_nodes: int
    amount: int
    ttp_ms: float
    sim_ticks: int
    bytes_total: int
    n_contracts: int
    n_shared_edges: int
    outcome: str
    routing_ms: float = 0.0
    latency_ms: float = 0.0
    n_paths: int = 0
    trial: int = 0
    source: int = -1
    sink: int = -1


def load_graph(spec: str, seed: int = 0) -> PaymentGraph:
    """``ba:n,m``, ``fixture:diamond``, ``fixture:chain:<hops>`` or a snapshot path."""
    if spec.startswith("ba:"):
        try:
            n, m = (int(x) for x in spec[3:].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad BA spec {spec!r}; expected ba:n,m") from exc
        return generate_ba(n, m, random.Random(seed))
    if spec == "fixture:diamond":
        return diamond_graph()
    if spec.startswith("fixture:chain:"):
        return chain_graph(int(spec.rsplit(":", 1)[1]))
    if not Path(spec).exists():
        raise ConfigError(f"graph file {spec!r} not found")
    return load_snapshot(spec)


def shared_edge_stats(paths: PathSet) -> dict:
    counts: dict = {}
    for path in paths.paths:
        for e in zip(path, path[1:]):
            counts[e] = counts.get(e, 0) + 1
    total = sum(counts.values())
    shared = sum(1 for c in counts.values() if c > 1)
    return {
        "path_contracts": total,
        "unique_edges": len(counts),
        "n_shared_edges": shared,
        "shared_fraction": shared / len(counts),
        "max_multiplicity": max(counts.values()),
        "saved_contracts": total - len(counts),
        "savings": (total - len(counts)) / total,
        # extra contracts a per-path protocol opens, relative to one per edge
        "extra_contracts": (total - len(counts)) / len(counts),
    }


def pick_pair(graph: PaymentGraph, rng: random.Random) -> tuple[int, int]:
    nodes = sorted(graph.nodes)
    s, r = rng.sample(nodes, 2)
    return s, r


def _restore(graph: PaymentGraph, saved: dict) -> None:
    graph.capacity.clear()
    graph.capacity.update(saved)


def run_trial(graph: PaymentGraph, amount: int, trial: int, cfg: ExperimentConfig,
              pair: tuple[int, int] | None = None) -> list[MetricsRow]:
    """Route one payment, then run every requested protocol on the same paths."""
    rng = random.Random(f"{cfg.seed}:{amount}:{trial}")
    source, sink = pair if pair is not None else pick_pair(graph, rng)
    if source not in graph.nodes or sink not in graph.nodes or source == sink:
        raise ConfigError(f"bad payer/payee pair ({source}, {sink})")
    n = graph.number_of_nodes()
    sim = cfg.sim_config(seed=cfg.seed * 1_000_003 + trial)
    started = time.perf_counter()
    try:
        paths = find_paths(graph, source, sink, amount, max_paths=cfg.max_paths)
        pc = paths_to_edge_set(paths, graph)
    except NoRoute:
        return [MetricsRow(p, n, amount, 0.0, 0, 0, 0, 0, "no-route", trial=trial, source=source,
                           sink=sink) for p in cfg.protocols]
    t_end = sim.t_end if sim.t_end is not None else default_t_end(longest_route(pc), sim)
    assign_timeouts(pc, t_end, sim.Delta)
    routing_ms = (time.perf_counter() - started) * 1e3
    stats = shared_edge_stats(paths)
    keys = KeyDirectory(sim.seed)
    rows = []
    saved = dict(graph.capacity)
    for proto in cfg.protocols:
        if proto == "htlc" and len(paths.paths) != 1:
            rows.append(MetricsRow(proto, n, amount, 0.0, 0, 0, 0, stats["n_shared_edges"],
                                   "multi-path-unsupported", round(routing_ms, 3),
                                   n_paths=len(paths.paths), trial=trial, source=source, sink=sink))
            continue
        try:
            if proto == "cryptomaze":
                res = CryptoMazeRun(graph, pc, sim, keys=keys).run()
            elif proto == "htlc":
                res = run_htlc(graph, paths, amount, sim, keys=keys)
            elif proto == "amp":
                res = run_amp(graph, paths, sim, keys=keys)
            else:
                res = run_mh_htlc(graph, paths, sim, keys=keys, proof_bytes=cfg.proof_bytes)
        finally:
            _restore(graph, saved)
        rows.append(MetricsRow(proto, n, amount, round(res.wall_ms + routing_ms, 3), res.sim_ticks,
                               res.bytes_total, res.n_contracts, stats["n_shared_edges"],
                               res.outcome, round(routing_ms, 3),
                               round(res.sim_ticks * cfg.tick_ms, 3), len(paths.paths),
                               trial, source, sink))
    return rows


def _worker(args):
    cfg, jobs = args
    graph = load_graph(cfg.graph, cfg.seed)
    out = []
    for amount, trial in jobs:
        out.extend(run_trial(graph, amount, trial, cfg, cfg.pair))
    return out


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """One row per (amount, trial, protocol), ordered deterministically."""
    jobs = [(a, t) for a in cfg.amounts for t in range(cfg.trials)]
    if cfg.workers == 1:
        rows = _worker((cfg, jobs))
    else:
        chunks = [jobs[i::cfg.workers] for i in range(cfg.workers)]
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = [r for part in pool.map(_worker, [(cfg, c) for c in chunks]) for r in part]
    order = {p: i for i, p in enumerate(cfg.protocols)}
    amount_pos = {a: i for i, a in enumerate(cfg.amounts)}
    rows.sort(key=lambda r: (amount_pos[r.amount], r.trial, order[r.protocol]))
    if cfg.out:
        write_csv(rows, cfg.out)
    return rows


def write_csv(rows: list[MetricsRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(asdict(row))


@dataclass
class SharedEdgeSummary:
    amount: int
    instances: int
    failed: int = 0
    shared_instances: int = 0
    per_instance_shared_fraction: list[float] = field(default_factory=list)
    max_multiplicity: int = 0
    savings: list[float] = field(default_factory=list)
    saved_contracts: list[int] = field(default_factory=list)
    extra_contracts: list[float] = field(default_factory=list)

    @property
    def routed(self) -> int:
        return self.instances - self.failed

    @property
    def sharing_fraction(self) -> float:
        return self.shared_instances / self.routed if self.routed else 0.0

    @property
    def mean_savings(self) -> float:
        return sum(self.savings) / len(self.savings) if self.savings else 0.0

    @property
    def mean_extra_contracts(self) -> float:
        return sum(self.extra_contracts) / len(self.extra_contracts) if self.extra_contracts else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(routed=self.routed, sharing_fraction=self.sharing_fraction,
                 mean_savings=self.mean_savings, mean_extra_contracts=self.mean_extra_contracts)
        return d


def shared_edge_report(graph: PaymentGraph, amount: int, trials: int, seed: int = 0,
                       max_paths: int = 16, pairs=None) -> SharedEdgeSummary:
    """How often routes share channels and what merging them saves.

    Savings are reported only over instances whose paths share an edge.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    rng = random.Random(seed)
    summary = SharedEdgeSummary(amount, trials)
    for t in range(trials):
        source, sink = pairs[t] if pairs else pick_pair(graph, rng)
        try:
            paths = find_paths(graph, source, sink, amount, max_paths=max_paths)
        except NoRoute:
            summary.failed += 1
            continue
        stats = shared_edge_stats(paths)
        if stats["n_shared_edges"]:
            summary.shared_instances += 1
            summary.per_instance_shared_fraction.append(stats["shared_fraction"])
            summary.savings.append(stats["savings"])
            summary.saved_contracts.append(stats["saved_contracts"])
            summary.extra_contracts.append(stats["extra_contracts"])
        summary.max_multiplicity = max(summary.max_multiplicity, stats["max_multiplicity"])
    return summary


__all__ = [
    "CSV_COLUMNS", "ConfigError", "ExperimentConfig", "MetricsRow", "PROTOCOLS",
    "SharedEdgeSummary", "coins", "load_graph", "run_experiment", "run_trial",
    "shared_edge_report", "shared_edge_stats", "write_csv",
]
