"""Static-corruption harness: wormhole attempts, linkability game, value privacy."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .baselines import run_htlc
from .engine import Behavior, KeyDirectory, SimConfig, prepare, run_payment, WORMHOLE_BLOCKED
from .fixtures import B, C, M, N, EXAMPLE_VALUE, diamond_graph
from .pcn import PaymentGraph
from .routing import EdgeSet
from .sender import ConditionTable, build_conditions, receiver_init
from .sim import RunResult

STRATEGIES = ("drop-forward", "withhold-release", "skip-release-collude", "observe-only")


class AdversaryError(Exception):
    pass


class InvalidColluderPlacement(AdversaryError):
    pass


class InsufficientTrials(AdversaryError):
    pass


@dataclass(frozen=True)
class CorruptionSet:
    """Corrupted nodes and their strategies, fixed before the run starts."""

    strategies: dict = field(default_factory=dict)

    def __post_init__(self):
        bad = {s for s in self.strategies.values() if s not in STRATEGIES}
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        if len(self.colluding()) not in (0, 2):
            raise InvalidColluderPlacement("skip-release-collude needs exactly two nodes")

    @property
    def nodes(self) -> frozenset:
        return frozenset(self.strategies)

    def colluding(self) -> list[int]:
        return sorted(n for n, s in self.strategies.items() if s == "skip-release-collude")

    def behaviors(self) -> dict[int, Behavior]:
        return {n: Behavior(s) for n, s in self.strategies.items() if s != "skip-release-collude"}


@dataclass
class Report:
    test: str
    trials: int
    statistic: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {"test": self.test, "trials": self.trials, "statistic": self.statistic,
                "threshold": self.threshold, "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# -- wormhole ------------------------------------------------------------------------------------


@dataclass
class WormholeOutcome:
    protocol: str
    colluders: tuple[int, int]
    skipped: tuple[int, ...]
    blocked: bool
    stolen: int
    run: RunResult


def order_colluders(paths, colluders) -> tuple[tuple[int, int], tuple[int, ...]]:
    """Orient the pair along a path and list the honest nodes strictly between them."""
    a, b = colluders
    for path in paths:
        if a in path and b in path:
            i, j = sorted((path.index(a), path.index(b)))
            if j - i < 2:
                raise InvalidColluderPlacement(f"no honest node between {a} and {b}")
            return (path[i], path[j]), tuple(path[i + 1:j])
    raise InvalidColluderPlacement(f"{a} and {b} do not share a path")


def wormhole_attempt(graph: PaymentGraph, source: int, sink: int, val: int,
                     colluders: tuple[int, int], protocol: str = "cryptomaze",
                     config: SimConfig | None = None) -> WormholeOutcome:
    """Colluders share the downstream opening and try to claim upstream directly.

    The attack counts as blocked when every skipped node still earns its fee.
    """
    config = config or SimConfig()
    fees_before = {n: graph.fee(n) for n in graph.nodes}
    probe = graph.copy()
    paths, _, _ = prepare(probe, source, sink, val, config)
    pair, skipped = order_colluders(paths.paths, colluders)
    if protocol == "cryptomaze":
        run = run_payment(graph, source, sink, val, config, colluders=pair)
    elif protocol == "htlc":
        if len(paths.paths) != 1:
            raise InvalidColluderPlacement("HTLC wormhole needs a single-path payment")
        run = run_htlc(graph, paths.paths[0], val, config, colluders=pair)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    honest_fee = sum(fees_before[n] for n in pair)
    stolen = run.gains.get(pair[0], 0) + run.gains.get(pair[1], 0) - honest_fee
    blocked = all(run.gains.get(n, 0) >= fees_before[n] for n in skipped) and stolen <= 0
    return WormholeOutcome(protocol, pair, skipped, blocked, stolen, run)


def wormhole_blocked_in_trace(run: RunResult) -> bool:
    return any(e.kind == WORMHOLE_BLOCKED for e in run.trace)


# -- linkability ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class NodeView:
    """What one corrupted forwarding node learns in the forward phase."""

    node: int
    incoming: tuple  # (channel, value, timeout, condition)
    outgoing: tuple  # ((channel, value, x_adj, condition, timeout), ...)


def view_from_table(table: ConditionTable, pc: EdgeSet, node: int) -> NodeView | None:
    preds = pc.predecessors(node)
    if not preds:
        return None
    i = preds[0]
    incoming = (pc.channel(i, node), pc.flow[(i, node)], pc.timeout[(i, node)],
                table.conditions[(i, node)])
    outgoing = tuple(
        (pc.channel(node, k), pc.flow[(node, k)], table.adjustments.get((node, k), 0),
         table.conditions[(node, k)], pc.timeout[(node, k)])
        for k in pc.successors(node))
    return NodeView(node, incoming, outgoing)


def view_from_observations(observations: dict, pc: EdgeSet, node: int) -> NodeView | None:
    """Same view, rebuilt from what the engine logged for a corrupted node."""
    from .sender import decode_payload
    recs = [r for r in observations.get(node, ()) if r["kind"] == "forward" and r["payload"]]
    if not recs:
        return None
    rec = recs[0]
    payload = decode_payload(rec["payload"])
    outgoing = tuple((t.channel_id, t.val, t.x_adj, t.condition, t.timeout)
                     for t in payload.tuples)
    return NodeView(node, (rec["channel"], rec["val"], rec["timeout"], rec["condition"]), outgoing)


def same_condition_variant(table: ConditionTable, pc: EdgeSet) -> ConditionTable:
    """Strawman where a splitting node reuses one condition on every outgoing channel."""
    for j in pc.nodes():
        succ = pc.successors(j)
        if len(succ) > 1:
            shared = table.conditions[(j, succ[0])]
            for k in succ[1:]:
                table.conditions[(j, k)] = shared
    return table


def _points(view: NodeView):
    yield view.incoming[3]
    for out in view.outgoing:
        yield out[3]


def distinguish(view_b: NodeView, view_c: NodeView) -> bool:
    """Guess "same payment" iff the two views share a condition point."""
    mine = list(_points(view_b))
    return any(any(p == q for p in mine) for q in _points(view_c))


def sigma_threshold(trials: int) -> float:
    return 0.5 + 3 * math.sqrt(0.25 / trials)


def linkability_test(samples: list[tuple[NodeView | None, NodeView | None, bool]],
                     guesser: Callable[[NodeView, NodeView], bool] = distinguish,
                     min_trials: int = 1, test: str = "linkability") -> Report:
    """Accuracy of ``guesser`` on labelled (view, view, same_payment) samples."""
    if len(samples) < min_trials:
        raise InsufficientTrials(f"{len(samples)} trials, need at least {min_trials}")
    correct = 0
    for vb, vc, same in samples:
        if vb is None or vc is None:
            raise InsufficientTrials("colluders did not both receive a partial payment")
        correct += guesser(vb, vc) == same
    acc = correct / len(samples)
    thr = sigma_threshold(len(samples))
    return Report(test, len(samples), acc, thr, acc <= thr)


class LinkabilityGame:
    """Balanced same/different-payment trials for two colluding split neighbours.

    Every payment uses the same topology, value and schedule, so only the
    cryptographic material differs between the two classes.
    """

    def __init__(self, graph_factory=diamond_graph, source: int = M, sink: int = N,
                 val: int = EXAMPLE_VALUE, colluders: tuple[int, int] = (B, C),
                 config: SimConfig | None = None, variant: str = "cryptomaze"):
        if variant not in ("cryptomaze", "strawman"):
            raise ValueError(f"unknown variant {variant!r}")
        self.config = config or SimConfig()
        self.colluders = colluders
        self.variant = variant
        graph = graph_factory()
        _, self.pc, _ = prepare(graph, source, sink, val, self.config)
        for c in colluders:
            if c not in self.pc.nodes():
                raise InsufficientTrials(f"node {c} carries no partial payment")
        splits = [j for j in self.pc.nodes() if len(self.pc.successors(j)) > 1]
        if not splits:
            raise InsufficientTrials("payment does not split; nothing to link")

    def payment(self, rng: random.Random) -> ConditionTable:
        _, X = receiver_init(rng)
        table = build_conditions(self.pc, X, rng)
        if self.variant == "strawman":
            same_condition_variant(table, self.pc)
        return table

    def samples(self, trials: int, seed: int = 0):
        rng = random.Random(seed)
        b, c = self.colluders
        out = []
        for t in range(trials):
            same = t % 2 == 0
            first = self.payment(rng)
            second = first if same else self.payment(rng)
            out.append((view_from_table(first, self.pc, b), view_from_table(second, self.pc, c),
                        same))
        rng.shuffle(out)
        return out

    def play(self, trials: int = 1000, seed: int = 0) -> Report:
        if trials < 2 or trials % 2:
            raise InsufficientTrials("need an even number of trials, at least two")
        return linkability_test(self.samples(trials, seed), min_trials=2,
                                test=f"linkability-{self.variant}")


# -- value privacy ---------------------------------------------------------------------------------


def value_privacy_check(run: RunResult, outsiders, pc: EdgeSet | None = None,
                        observations: dict | None = None) -> Report:
    """Count protocol messages and observations that reached ``outsiders``."""
    outsiders = set(outsiders)
    if pc is not None and outsiders & set(pc.nodes()):
        raise ValueError("outsiders must not carry the payment")
    seen = sum(1 for e in run.trace if e.bytes and (e.dst in outsiders or e.src in outsiders))
    if observations:
        seen += sum(len(observations.get(n, ())) for n in outsiders)
    return Report("value-privacy", 1, float(seen), 0.0, seen == 0)


def run_corrupted(graph: PaymentGraph, source: int, sink: int, val: int,
                  corruption: CorruptionSet, config: SimConfig | None = None,
                  keys: KeyDirectory | None = None) -> RunResult:
    pair = corruption.colluding()
    colluders = None
    if pair:
        probe = graph.copy()
        paths, _, _ = prepare(probe, source, sink, val, config or SimConfig())
        colluders, _ = order_colluders(paths.paths, pair)
    return run_payment(graph, source, sink, val, config, corruption.behaviors(), colluders, keys)


__all__ = [
    "CorruptionSet", "InsufficientTrials", "InvalidColluderPlacement", "LinkabilityGame",
    "NodeView", "Report", "STRATEGIES", "WormholeOutcome", "distinguish", "linkability_test",
    "order_colluders", "run_corrupted", "same_condition_variant", "sigma_threshold",
    "value_privacy_check", "view_from_observations", "view_from_table", "wormhole_attempt",
    "wormhole_blocked_in_trace",
]
