"""Event-driven execution of one multi-path payment.

Each node runs the forwarding, release and abort handlers below; the payer
preprocesses everything up front.  Node misbehaviour is injected through
:class:`Behavior` so the same handlers serve honest runs and fault runs.
"""

from __future__ import annotations

import hashlib
import random
import struct
import time
from dataclasses import dataclass, field
from enum import Enum

from .group import (
    ORDER, AuthFailure, SealedBlob, base_mul, encode_point, encode_scalar, points_equal,
    unseal,
)
from .pcn import InsufficientCapacity, PaymentGraph
from .routing import EdgeSet, route_payment
from .scriptless import EcdsaLockFunctionality
from .sender import (
    HopPayload, PayloadError, ReceiverPayload, build_conditions, build_onions, decode_payload,
    receiver_init,
)
from .sim import EventLoop, RunResult, State
from .timelock import check_forward, compute_release, node_secret


class Behavior(str, Enum):
    HONEST = "honest"
    DROP_FORWARD = "drop-forward"
    WITHHOLD_RELEASE = "withhold-release"
    TAMPER = "tamper"
    OBSERVE_ONLY = "observe-only"


WORMHOLE_BLOCKED = "WormholeAttemptBlocked"


@dataclass
class SimConfig:
    delta: int = 1
    Delta: int = 10
    t_end: int | None = None
    wait: int | None = None
    seed: int = 0
    lock_mechanism: str = "point"
    max_paths: int = 16

    def __post_init__(self):
        if self.delta < 1 or self.Delta < 1:
            raise ValueError("delta and Delta must be positive tick counts")
        if self.max_paths < 1:
            raise ValueError("max_paths must be at least 1")
        if (self.t_end is not None and self.t_end < 0) or (self.wait is not None and self.wait < 0):
            raise ValueError("t_end and wait must be non-negative")
        if self.lock_mechanism not in ("point", "ecdsa"):
            raise ValueError(f"unknown lock mechanism {self.lock_mechanism!r}")


class KeyDirectory:
    """Long-term node key pairs derived from a seed on first use."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._keys: dict[int, tuple[int, object]] = {}

    def _pair(self, node):
        if node not in self._keys:
            digest = hashlib.sha256(f"node-key:{self.seed}:{node}".encode()).digest()
            sk = int.from_bytes(digest, "big") % (ORDER - 1) + 1
            self._keys[node] = (sk, base_mul(sk))
        return self._keys[node]

    def secret(self, node) -> int:
        return self._pair(node)[0]

    def public(self, node):
        return self._pair(node)[1]

    def publics(self, nodes) -> dict:
        return {n: self.public(n) for n in nodes}


# -- wire formats (byte counts feed the overhead metric) ----------------------------------

_FORWARD = struct.Struct(">BQ")
_TAIL = struct.Struct(">QQI")


def wire_forward(channel: int, condition, val: int, timeout: int, blob: bytes) -> bytes:
    return (_FORWARD.pack(1, channel) + encode_point(condition)
            + _TAIL.pack(val, timeout, len(blob)) + blob)


def wire_accept(channel: int, opening: int) -> bytes:
    return _FORWARD.pack(2, channel) + encode_scalar(opening)


def wire_abort(channel: int) -> bytes:
    return _FORWARD.pack(3, channel)


@dataclass
class NodeRuntime:
    node: int
    behavior: Behavior = Behavior.HONEST
    flag: bool = False
    first_seen: int | None = None
    val_acc: int = 0
    released: bool = False
    aborted: bool = False
    plaintext: bytes | None = None
    payload: HopPayload | None = None
    x: int = 0
    incoming: list = field(default_factory=list)
    outgoing: list = field(default_factory=list)
    shares: dict = field(default_factory=dict)
    t_end_seen: dict = field(default_factory=dict)


def longest_route(pc: EdgeSet) -> int:
    depth = {pc.source: 0}
    for u, v in pc.edges:
        depth[v] = max(depth.get(v, 0), depth[u] + 1)
    return depth[pc.sink]


class CryptoMazeRun:
    """One payment over a prepared edge set."""

    protocol = "cryptomaze"

    def __init__(self, graph: PaymentGraph, pc: EdgeSet, config: SimConfig | None = None,
                 behaviors: dict[int, Behavior] | None = None,
                 colluders: tuple[int, int] | None = None,
                 keys: KeyDirectory | None = None, t0: int = 0):
        self.graph = graph
        self.pc = pc
        self.config = config or SimConfig()
        self.loop = EventLoop(graph, self.config.delta)
        self.loop.now = t0
        self.rng = random.Random(self.config.seed)
        self.keys = keys or KeyDirectory(self.config.seed)
        self.behaviors = {n: Behavior(b) for n, b in (behaviors or {}).items()}
        self.colluders = colluders
        self._wormhole_pending = False
        self.wormhole_attempts = 0
        self.wormhole_blocked = 0
        self.observations: dict[int, list[dict]] = {}
        longest = longest_route(pc)
        self.wait = self.config.wait if self.config.wait is not None else self.config.delta * longest
        if not pc.timeout:
            raise ValueError("edge set has no timeouts; call assign_timeouts first")
        self.t_end = min(pc.timeout[(b, pc.sink)] for b in pc.predecessors(pc.sink))
        self.rt = {n: NodeRuntime(n, self.behaviors.get(n, Behavior.HONEST)) for n in pc.nodes()}
        self.ecdsa = EcdsaLockFunctionality(self.rng) if self.config.lock_mechanism == "ecdsa" else None

        started = time.perf_counter()
        self.receiver_secret, self.receiver_point = receiver_init(self.rng)
        self.table = build_conditions(pc, self.receiver_point, self.rng)
        nodes = [n for n in pc.nodes() if n != pc.source]
        self.onions = build_onions(self.table, pc, self.keys.publics(nodes), self.rng, self.t_end)
        self.preprocess_ms = (time.perf_counter() - started) * 1e3

    # -- helpers ------------------------------------------------------------------------

    def _observe(self, node, **rec):
        rec["time"] = self.loop.now
        self.observations.setdefault(node, []).append(rec)

    def _verifier(self, edge, condition):
        if self.ecdsa is None:
            return lambda r: points_equal(base_mul(r), condition)
        session = (self.pc.channel(*edge), edge)
        key = self.ecdsa.keygen(session, *edge)
        m = self.pc.channel(*edge).to_bytes(8, "big")
        presig = self.ecdsa.lock(session, m, condition)
        return lambda r: self.ecdsa.verify(session, m, r, presig, key.pk)

    def _open_and_forward(self, j: int, tuples) -> bool:
        """Lock every outgoing contract of ``j`` and ship its blob; all or nothing."""
        targets = []
        for t in tuples:
            k = self._neighbor(j, t.channel_id)
            if k is None:
                return False
            targets.append((k, t))
        need: dict = {}
        for k, t in targets:
            need[(j, k)] = need.get((j, k), 0) + t.val
        if any(self.graph.capacity[e] < v for e, v in need.items()):
            return False
        tamper = self.rt[j].behavior is Behavior.TAMPER
        for k, t in targets:
            edge = (j, k)
            self.loop.open_contract(edge, j, k, t.val, t.timeout, t.condition,
                                    self._verifier(edge, t.condition), self._on_expired)
            self.rt[j].outgoing.append(edge)
            blob = t.blob.to_bytes()
            if tamper:
                blob = blob[:-1] + bytes([blob[-1] ^ 1])
            wire = wire_forward(t.channel_id, t.condition, t.val, t.timeout, blob)
            self.loop.send(j, k, "forward", t.channel_id, wire, self._on_forward, k, j, t, blob)
        return True

    def _neighbor(self, j, channel_id):
        u_v = self.graph.channels.get(channel_id)
        if u_v is None or j not in u_v:
            return None
        u, v = u_v
        return v if u == j else u

    def _abort_incoming(self, j: int) -> None:
        rt = self.rt[j]
        rt.aborted = True
        for edge in rt.incoming:
            if self.loop.live(edge):
                cid = self.pc.channel(*edge)
                self.loop.send(j, edge[0], "abort", cid, wire_abort(cid), self._on_abort, edge[0], j)

    # -- forwarding -------------------------------------------------------------------------

    def start(self) -> None:
        src = self.pc.source
        self.rt[src].flag = True
        self.rt[src].payload = HopPayload(self.onions.sender_tuples)
        if not self._open_and_forward(src, self.onions.sender_tuples):
            raise InsufficientCapacity("payer cannot fund its outgoing contracts")

    def _on_forward(self, j: int, i: int, t, blob: bytes) -> None:
        edge = (i, j)
        contract = self.loop.contracts[edge]
        rt = self.rt[j]
        if contract.state is not State.LOCKED:
            return
        rt.incoming.append(edge)
        rt.val_acc += contract.value
        if rt.first_seen is None:
            rt.first_seen = self.loop.now
        try:
            plaintext = unseal(self.keys.secret(j), SealedBlob.from_bytes(blob))
            payload = decode_payload(plaintext)
        except (AuthFailure, PayloadError, ValueError):
            self._observe(j, kind="forward", channel=t.channel_id, condition=contract.condition,
                          val=contract.value, timeout=contract.timeout, payload=None)
            self.loop.note("auth-failure", j, t.channel_id)
            self._abort_incoming(j)
            return
        self._observe(j, kind="forward", channel=t.channel_id, condition=contract.condition,
                      val=contract.value, timeout=contract.timeout, payload=plaintext)
        if j == self.pc.sink:
            self._receiver_forward(j, edge, payload)
            return
        if rt.aborted or rt.flag or not isinstance(payload, HopPayload):
            self._abort_incoming(j)
            return
        if rt.plaintext is not None and plaintext != rt.plaintext:
            self._abort_incoming(j)
            return
        terms = [h.terms() for h in payload.tuples]
        if not check_forward(terms, contract.timeout, contract.condition, t.channel_id,
                             self.config.Delta):
            self.loop.note("check-failed", j, t.channel_id)
            self._abort_incoming(j)
            return
        if rt.plaintext is None:
            rt.plaintext, rt.payload, rt.x = plaintext, payload, node_secret(terms)
            self.loop.at(rt.first_seen + self.wait, self._wait_expired, j)
        out_total = sum(h.val for h in payload.tuples)
        needed = out_total + self.graph.fee(j, out_total)
        if rt.val_acc < needed:
            return
        if rt.val_acc > needed:
            self._abort_incoming(j)
            return
        rt.flag = True
        if rt.behavior is Behavior.DROP_FORWARD:
            self.loop.note("dropped", j)
            return
        if not self._open_and_forward(j, payload.tuples):
            self._abort_incoming(j)

    def _wait_expired(self, j: int) -> None:
        rt = self.rt[j]
        if not rt.flag and not rt.aborted:
            self.loop.note("wait-expired", j)
            self._abort_incoming(j)

    def _receiver_forward(self, r: int, edge, payload) -> None:
        rt = self.rt[r]
        if rt.aborted or rt.flag or not isinstance(payload, ReceiverPayload):
            self._abort_incoming(r)
            return
        rt.shares[edge] = payload.share
        rt.t_end_seen[edge] = payload.t_end
        if len(rt.incoming) == 1:
            self.loop.at(rt.first_seen + self.wait, self._wait_expired, r)
        if rt.val_acc < self.pc.val:
            return
        if rt.val_acc > self.pc.val:
            self._abort_incoming(r)
            return
        rt.flag = True
        if rt.behavior is Behavior.WITHHOLD_RELEASE:
            self.loop.note("withheld", r)
            return
        self._receiver_release(r)

    def _receiver_release(self, r: int) -> None:
        rt = self.rt[r]
        y = 0
        for edge in rt.incoming:
            if self.loop.contracts[edge].timeout != rt.t_end_seen[edge]:
                self._abort_incoming(r)
                return
            y = (y + rt.shares[edge]) % ORDER
        openings = {}
        for edge in rt.incoming:
            cid = self.pc.channel(*edge)
            opening = compute_release(self.receiver_secret, y, cid)
            if not points_equal(base_mul(opening), self.loop.contracts[edge].condition):
                self._abort_incoming(r)
                return
            openings[edge] = opening
        rt.released = True
        for edge, opening in openings.items():
            self._send_accept(r, edge, opening)

    # -- release and abort ------------------------------------------------------------------

    def _send_accept(self, j: int, edge, opening: int) -> None:
        cid = self.pc.channel(*edge)
        self.loop.send(j, edge[0], "accept", cid, wire_accept(cid, opening),
                       self._on_accept, edge[0], j, opening)

    def _on_accept(self, i: int, j: int, opening: int) -> None:
        """``i`` receives an opening from ``j`` for contract (i, j)."""
        edge = (i, j)
        contract = self.loop.contracts[edge]
        self._observe(i, kind="accept", channel=contract.channel_id, opening=opening)
        if contract.state is State.EXPIRED:
            # refund already happened on-chain; the late opening is worthless
            self.loop.note("late-release", i, contract.channel_id)
            return
        if not self.loop.release(edge, opening):
            if contract.state is State.LOCKED:
                self.loop.note(WORMHOLE_BLOCKED, i, contract.channel_id, "invalid opening")
                self.wormhole_blocked += 1
            return
        self.loop.note("settled", i, contract.channel_id)
        if i == self.pc.source:
            return
        rt = self.rt[i]
        if rt.released:
            return
        if self.colluders and i == self.colluders[1] and not self._wormhole_pending \
                and self.wormhole_attempts == 0:
            self._wormhole_attempt(i, j, opening)
            return
        if rt.behavior is Behavior.WITHHOLD_RELEASE:
            self.loop.note("withheld", i)
            return
        self._release_upstream(i, j, opening)

    def _upstream_opening(self, i: int, j: int, opening: int) -> int:
        rt = self.rt[i]
        if len(rt.payload.tuples) > 1:
            adj = next(h.x_adj for h in rt.payload.tuples if h.channel_id == self.pc.channel(i, j))
            return (opening + adj) % ORDER
        return opening

    def _release_upstream(self, i: int, j: int, opening: int) -> None:
        rt = self.rt[i]
        rt.released = True
        r_next = self._upstream_opening(i, j, opening)
        for edge in rt.incoming:
            if self.loop.live(edge):
                self._send_accept(i, edge, compute_release(r_next, rt.x, self.pc.channel(*edge)))

    def _on_abort(self, i: int, j: int) -> None:
        edge = (i, j)
        c = self.loop.contracts[edge]
        self._observe(i, kind="abort", channel=c.channel_id)
        if not self.loop.cancel(edge):
            return
        self._after_outgoing_closed(i)

    def _on_expired(self, contract) -> None:
        self._after_outgoing_closed(contract.payer)

    def _after_outgoing_closed(self, i: int) -> None:
        if i == self.pc.source:
            return
        rt = self.rt[i]
        if rt.released or any(self.loop.live(e) for e in rt.outgoing):
            return
        self._abort_incoming(i)

    # -- collusion ---------------------------------------------------------------------------

    def _wormhole_attempt(self, down: int, succ: int, opening: int) -> None:
        """``down`` hands its opening to ``up``, which tries to skip the nodes in between."""
        up = self.colluders[0]
        self._wormhole_pending = True
        self.wormhole_attempts += 1
        self._held = (down, succ, opening)
        self.loop.note("wormhole-attempt", down, note=f"shared with {up}")
        down_rt = self.rt[down]
        r_next = self._upstream_opening(down, succ, opening)
        # best guess available to the pair: down's own incoming opening
        shared = compute_release(r_next, down_rt.x, self.pc.channel(*down_rt.incoming[0]))
        up_rt = self.rt[up]
        for edge in up_rt.incoming:
            if self.loop.live(edge):
                forged = compute_release(shared, up_rt.x, self.pc.channel(*edge))
                self._send_accept(up, edge, forged)
        # once the forged opening has landed, down falls back to releasing honestly
        self.loop.at(self.loop.now + self.config.delta, self._wormhole_fallback)

    def _wormhole_fallback(self) -> None:
        self._wormhole_pending = False
        down, succ, opening = self._held
        self.loop.note("wormhole-fallback", down)
        self._release_upstream(down, succ, opening)

    # -- driver ---------------------------------------------------------------------------------

    def run(self) -> RunResult:
        started = time.perf_counter()
        touched = set()
        for u, v in self.pc.edges:
            touched.add((u, v))
            touched.add((v, u))
        before = {d: self.graph.capacity[d] for d in touched}
        self.start()
        self.loop.run()
        end = max((e.time for e in self.loop.trace), default=self.loop.now)
        gains = {n: 0 for n in self.pc.nodes()}
        for (u, v) in touched:
            gains[u] += self.graph.capacity[(u, v)] - before[(u, v)]
        wall = (time.perf_counter() - started) * 1e3 + self.preprocess_ms
        return RunResult(
            protocol=self.protocol,
            outcome=classify(gains, self.pc),
            gains=gains,
            trace=self.loop.trace,
            contracts=self.loop.contracts,
            bytes_total=self.loop.bytes_total(),
            sim_ticks=end,
            wall_ms=wall,
            extra={"wormhole_blocked": self.wormhole_blocked,
                   "wormhole_attempts": self.wormhole_attempts,
                   "t_end": self.t_end, "n_shared_edges": 0},
        )


def classify(gains: dict[int, int], pc: EdgeSet) -> str:
    if gains.get(pc.sink, 0) == pc.val:
        return "success"
    if all(g == 0 for g in gains.values()):
        return "aborted"
    return "partial"


def default_t_end(pc_hops: int, config: SimConfig, t0: int = 0) -> int:
    wait = config.wait if config.wait is not None else config.delta * pc_hops
    return t0 + pc_hops * config.delta + wait + config.delta


def prepare(graph: PaymentGraph, source: int, sink: int, val: int, config: SimConfig):
    """Route a payment and assign timeouts, timing the routing step."""
    started = time.perf_counter()
    t_end = config.t_end
    if t_end is None:
        # route once with a placeholder, then derive t_end from the longest route
        paths, pc = route_payment(graph, source, sink, val, 0, config.Delta, config.max_paths)
        t_end = default_t_end(longest_route(pc), config)
        from .routing import assign_timeouts
        assign_timeouts(pc, t_end, config.Delta)
    else:
        paths, pc = route_payment(graph, source, sink, val, t_end, config.Delta, config.max_paths)
    return paths, pc, (time.perf_counter() - started) * 1e3


def run_payment(graph: PaymentGraph, source: int, sink: int, val: int,
                config: SimConfig | None = None, behaviors=None, colluders=None,
                keys: KeyDirectory | None = None) -> RunResult:
    config = config or SimConfig()
    paths, pc, routing_ms = prepare(graph, source, sink, val, config)
    result = CryptoMazeRun(graph, pc, config, behaviors, colluders, keys).run()
    result.routing_ms = routing_ms
    result.wall_ms += routing_ms
    result.extra["paths"] = paths
    result.extra["edge_set"] = pc
    result.extra["n_shared_edges"] = shared_edges(paths)
    return result


def shared_edges(paths) -> int:
    seen: dict = {}
    for path in paths.paths:
        for e in zip(path, path[1:]):
            seen[e] = seen.get(e, 0) + 1
    return sum(1 for c in seen.values() if c > 1)


def run_simulation(graph: PaymentGraph, payments, config: SimConfig | None = None) -> list[RunResult]:
    """Execute payments one after another on a shared graph."""
    config = config or SimConfig()
    keys = KeyDirectory(config.seed)
    return [run_payment(graph, s, r, v, config, keys=keys) for s, r, v in payments]
