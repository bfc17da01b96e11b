"""Hash-lock baselines: single-path HTLC, AMP and multi-hop HTLC.

All three share one runner.  Every path gets its own contract on every hop,
so a channel used by two paths carries two contracts.  Each intermediary's
fee is charged once per payment, on the same path the multi-path router
attributes it to, so paired runs move exactly the same edge flows as the
CryptoMaze edge set.
"""

from __future__ import annotations

import hashlib
import random
import struct
import time
from dataclasses import dataclass, field
from typing import Sequence

from .engine import Behavior, KeyDirectory, SimConfig, default_t_end
from .group import AuthFailure, SealedBlob, seal, unseal
from .pcn import InsufficientCapacity, PaymentGraph
from .routing import PathSet
from .sim import EventLoop, RunResult, State

DIGEST_BYTES = 32

# Calibrated once on the diamond fixture so that a two-path MH-HTLC payment
# costs roughly 297 times the CryptoMaze payment; see the decisions ledger.
DEFAULT_PROOF_BYTES = 139_500


class BaselineError(Exception):
    pass


class EmptyPath(BaselineError):
    pass


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


@dataclass(frozen=True)
class HashLock:
    digest: bytes
    preimage: bytes | None = None

    @classmethod
    def from_preimage(cls, preimage: bytes) -> "HashLock":
        return cls(sha256(preimage), preimage)

    def opens(self, candidate: bytes) -> bool:
        return isinstance(candidate, bytes) and sha256(candidate) == self.digest


@dataclass(frozen=True)
class AmpShares:
    """Master secret, its XOR shares and the per-path preimages derived from it."""

    master: bytes
    shares: tuple[bytes, ...]

    @classmethod
    def generate(cls, n: int, rng: random.Random) -> "AmpShares":
        if n < 1:
            raise ValueError("need at least one path")
        shares = [rng.randbytes(DIGEST_BYTES) for _ in range(n - 1)]
        master = rng.randbytes(DIGEST_BYTES)
        last = master
        for s in shares:
            last = xor_bytes(last, s)
        return cls(master, tuple(shares) + (last,))

    @staticmethod
    def reconstruct(shares: Sequence[bytes]) -> bytes:
        out = bytes(DIGEST_BYTES)
        for s in shares:
            out = xor_bytes(out, s)
        return out

    @staticmethod
    def path_preimage(master: bytes, index: int) -> bytes:
        return sha256(master + struct.pack(">I", index))

    def lock(self, index: int) -> HashLock:
        return HashLock.from_preimage(self.path_preimage(self.master, index))


@dataclass(frozen=True)
class MhHtlcChain:
    """Per-hop secrets ``x_i`` with ``y_i = H(x_i xor x_{i+1} xor ... xor x_n)``."""

    xs: tuple[bytes, ...]
    ys: tuple[bytes, ...]

    @classmethod
    def generate(cls, hops: int, rng: random.Random) -> "MhHtlcChain":
        if hops < 1:
            raise EmptyPath("chain needs at least one hop")
        xs = [rng.randbytes(DIGEST_BYTES) for _ in range(hops)]
        ys = [b""] * hops
        acc = bytes(DIGEST_BYTES)
        for i in range(hops - 1, -1, -1):
            acc = xor_bytes(acc, xs[i])
            ys[i] = sha256(acc)
        return cls(tuple(xs), tuple(ys))

    def preimage(self, hop: int) -> bytes:
        acc = bytes(DIGEST_BYTES)
        for x in self.xs[hop:]:
            acc = xor_bytes(acc, x)
        return acc

    def consistent(self) -> bool:
        return all(sha256(self.preimage(i)) == y for i, y in enumerate(self.ys))


# -- wire formats -----------------------------------------------------------------------------

_KIND = struct.Struct(">BQ")
_FWD_TAIL = struct.Struct(">QQI")
_HOP = struct.Struct(">QQQI")  # next channel, value, timeout, inner blob length
_AMP_RECV = struct.Struct(">IIQ")  # path index, path count, total value
_RECV = struct.Struct(">QQ")  # value, t_end
_SETUP_HEAD = struct.Struct(">I")


def wire_forward(channel: int, digest: bytes, val: int, timeout: int, blob: bytes) -> bytes:
    return _KIND.pack(1, channel) + digest + _FWD_TAIL.pack(val, timeout, len(blob)) + blob


def wire_accept(channel: int, preimage: bytes) -> bytes:
    return _KIND.pack(2, channel) + preimage


def wire_abort(channel: int) -> bytes:
    return _KIND.pack(3, channel)


@dataclass
class Route:
    index: int
    nodes: tuple[int, ...]
    vals: list[int]
    timeouts: list[int]
    digests: list[bytes]
    blob: bytes = b""

    @property
    def edges(self):
        return list(zip(self.nodes, self.nodes[1:]))


@dataclass
class _HopState:
    incoming: tuple | None = None
    outgoing: tuple | None = None
    released: bool = False


def path_edge_values(paths: PathSet, graph: PaymentGraph) -> list[list[int]]:
    """Per-path contract values; a node's fee rides on the first path through it."""
    carrier: dict[int, int] = {}
    for p, path in enumerate(paths.paths):
        for node in path[1:-1]:
            carrier.setdefault(node, p)
    out = []
    for p, path in enumerate(paths.paths):
        vals = [0] * (len(path) - 1)
        acc = paths.amounts[p]
        for h in range(len(path) - 2, -1, -1):
            vals[h] = acc
            node = path[h]
            if h > 0 and carrier.get(node) == p:
                acc += graph.fee(node, acc)
        out.append(vals)
    return out


class HashLockRun:
    """Shared forwarding and release machinery for the hash-lock baselines."""

    protocol = "hashlock"

    def __init__(self, graph: PaymentGraph, paths: PathSet, config: SimConfig | None = None,
                 behaviors: dict[int, Behavior] | None = None,
                 colluders: tuple[int, int] | None = None,
                 keys: KeyDirectory | None = None):
        if not paths.paths or any(len(p) < 2 for p in paths.paths):
            raise EmptyPath("every path needs at least one hop")
        self.graph = graph
        self.paths = paths
        self.config = config or SimConfig()
        self.loop = EventLoop(graph, self.config.delta)
        self.rng = random.Random(self.config.seed)
        self.keys = keys or KeyDirectory(self.config.seed)
        self.behaviors = {n: Behavior(b) for n, b in (behaviors or {}).items()}
        self.colluders = colluders
        longest = max(len(p) - 1 for p in paths.paths)
        self.wait = self.config.wait if self.config.wait is not None else self.config.delta * longest
        self.t_end = self.config.t_end if self.config.t_end is not None else default_t_end(longest, self.config)
        self.state: dict[tuple[int, int], _HopState] = {}
        self.arrived: dict[int, tuple] = {}
        self.receiver_first: int | None = None
        self.receiver_done = False
        vals = path_edge_values(paths, graph)
        self.routes = []
        for p, path in enumerate(paths.paths):
            hops = len(path) - 1
            timeouts = [self.t_end + (hops - 1 - h) * self.config.Delta for h in range(hops)]
            self.routes.append(Route(p, tuple(path), vals[p], timeouts, [b""] * hops))
        started = time.perf_counter()
        self.prepare()
        for route in self.routes:
            route.blob = self._onion(route)
        self.preprocess_ms = (time.perf_counter() - started) * 1e3

    # -- protocol-specific hooks ----------------------------------------------------------

    def prepare(self) -> None:
        raise NotImplementedError

    def receiver_payload(self, route: Route) -> bytes:
        return _RECV.pack(route.vals[-1], self.t_end)

    def hop_extra(self, route: Route, hop: int) -> bytes:
        return b""

    def outgoing_digest(self, route: Route, hop: int, incoming: bytes) -> bytes:
        return route.digests[hop]

    def upstream_preimage(self, route: Route, hop: int, preimage: bytes) -> bytes:
        return preimage

    def receiver_openings(self) -> dict[int, bytes] | None:
        raise NotImplementedError

    def setup(self) -> None:
        """Messages the payer sends before forwarding starts."""

    def hop_ready(self, route: Route, hop: int) -> bool:
        return True

    # -- onions ---------------------------------------------------------------------------------

    def _onion(self, route: Route) -> bytes:
        nodes = route.nodes
        blob = seal(self.keys.public(nodes[-1]), self.receiver_payload(route), self.rng).to_bytes()
        for h in range(len(nodes) - 2, 0, -1):
            cid = self.graph.channel_id(nodes[h], nodes[h + 1])
            plain = (_HOP.pack(cid, route.vals[h], route.timeouts[h], len(blob)) + blob
                     + self.hop_extra(route, h))
            blob = seal(self.keys.public(nodes[h]), plain, self.rng).to_bytes()
        return blob

    # -- forwarding --------------------------------------------------------------------------------

    def _open(self, route: Route, hop: int, blob: bytes) -> bool:
        u, v = route.nodes[hop], route.nodes[hop + 1]
        val = route.vals[hop]
        if self.graph.capacity[(u, v)] < val:
            return False
        key = (route.index, u, v)
        lock = HashLock(route.digests[hop])
        self.loop.open_contract(key, u, v, val, route.timeouts[hop], lock.digest, lock.opens)
        self.state.setdefault((route.index, u), _HopState()).outgoing = key
        cid = self.graph.channel_id(u, v)
        wire = wire_forward(cid, route.digests[hop], val, route.timeouts[hop], blob)
        self.loop.send(u, v, "forward", cid, wire, self._on_forward, route, hop + 1, blob)
        return True

    def start(self) -> None:
        self.setup()
        for route in self.routes:
            if not self._open(route, 0, route.blob):
                raise InsufficientCapacity(f"payer cannot fund path {route.index}")

    def _on_forward(self, route: Route, hop: int, blob: bytes) -> None:
        node = route.nodes[hop]
        key = (route.index, route.nodes[hop - 1], node)
        if not self.loop.live(key):
            return
        st = self.state.setdefault((route.index, node), _HopState())
        st.incoming = key
        try:
            plain = unseal(self.keys.secret(node), SealedBlob.from_bytes(blob))
        except (AuthFailure, ValueError):
            self._abort_upstream(route, hop)
            return
        if hop == len(route.nodes) - 1:
            self._receiver_forward(route, plain)
            return
        behavior = self.behaviors.get(node, Behavior.HONEST)
        if behavior is Behavior.DROP_FORWARD:
            self.loop.note("dropped", node)
            return
        if not self.hop_ready(route, hop):
            self._abort_upstream(route, hop)
            return
        _, val, timeout, blen = _HOP.unpack_from(plain, 0)
        inner = plain[_HOP.size:_HOP.size + blen]
        if behavior is Behavior.TAMPER:
            inner = inner[:-1] + bytes([inner[-1] ^ 1])
        if val != route.vals[hop] or timeout != route.timeouts[hop] \
                or self.loop.contracts[key].value < val \
                or self.loop.contracts[key].timeout < timeout + self.config.Delta:
            self._abort_upstream(route, hop)
            return
        if not self._open(route, hop, inner):
            self._abort_upstream(route, hop)

    def _receiver_forward(self, route: Route, plain: bytes) -> None:
        self.arrived[route.index] = plain
        if self.receiver_first is None:
            self.receiver_first = self.loop.now
        if len(self.arrived) < len(self.routes) or self.receiver_done:
            return
        self.receiver_done = True
        sink = route.nodes[-1]
        if self.behaviors.get(sink) is Behavior.WITHHOLD_RELEASE:
            self.loop.note("withheld", sink)
            return
        openings = self.receiver_openings()
        if openings is None:
            for r in self.routes:
                self._abort_upstream(r, len(r.nodes) - 1)
            return
        for r in self.routes:
            self._send_accept(r, len(r.nodes) - 1, openings[r.index])

    # -- release and abort -------------------------------------------------------------------------

    def _send_accept(self, route: Route, hop: int, preimage: bytes) -> None:
        u, v = route.nodes[hop - 1], route.nodes[hop]
        cid = self.graph.channel_id(u, v)
        self.loop.send(v, u, "accept", cid, wire_accept(cid, preimage),
                       self._on_accept, route, hop - 1, preimage)

    def _on_accept(self, route: Route, hop: int, preimage: bytes) -> None:
        """Node at ``hop`` receives the opening of its outgoing contract."""
        node = route.nodes[hop]
        key = (route.index, node, route.nodes[hop + 1])
        if not self.loop.release(key, preimage):
            if self.loop.contracts[key].state is State.EXPIRED:
                self.loop.note("late-release", node, self.loop.contracts[key].channel_id)
            return
        self.loop.note("settled", node, self.loop.contracts[key].channel_id)
        if hop == 0:
            return
        st = self.state[(route.index, node)]
        if st.released:
            return
        upstream = self.upstream_preimage(route, hop, preimage)
        if self.colluders and node == self.colluders[1]:
            self._collude(route, hop, upstream)
            return
        if self.behaviors.get(node) is Behavior.WITHHOLD_RELEASE:
            self.loop.note("withheld", node)
            return
        st.released = True
        if self.loop.live(st.incoming):
            self._send_accept(route, hop, upstream)

    def _collude(self, route: Route, hop: int, preimage: bytes) -> None:
        """``down`` keeps quiet and hands its opening to ``up``, which claims directly."""
        up = self.colluders[0]
        if up not in route.nodes[:hop]:
            return
        up_hop = route.nodes.index(up)
        self.loop.note("wormhole-attempt", route.nodes[hop], note=f"shared with {up}")
        st = self.state[(route.index, up)]
        st.released = True
        # one digest along the path, so the shared opening fits up's incoming contract too
        if self.loop.live(st.incoming):
            self._send_accept(route, up_hop, preimage)

    def _abort_upstream(self, route: Route, hop: int) -> None:
        u, v = route.nodes[hop - 1], route.nodes[hop]
        key = (route.index, u, v)
        if self.loop.live(key):
            cid = self.graph.channel_id(u, v)
            self.loop.send(v, u, "abort", cid, wire_abort(cid), self._on_abort, route, hop - 1)

    def _on_abort(self, route: Route, hop: int) -> None:
        key = (route.index, route.nodes[hop], route.nodes[hop + 1])
        if not self.loop.cancel(key):
            return
        if hop > 0:
            self._abort_upstream(route, hop)

    # -- driver -------------------------------------------------------------------------------------

    def run(self) -> RunResult:
        started = time.perf_counter()
        touched = set()
        for route in self.routes:
            for u, v in route.edges:
                touched.update({(u, v), (v, u)})
        before = {d: self.graph.capacity[d] for d in touched}
        self.start()
        self.loop.run()
        end = max((e.time for e in self.loop.trace), default=self.loop.now)
        gains = {n: 0 for route in self.routes for n in route.nodes}
        for (u, v) in touched:
            gains[u] += self.graph.capacity[(u, v)] - before[(u, v)]
        sink = self.paths.sink
        if gains.get(sink, 0) == self.paths.val:
            outcome = "success"
        elif all(g == 0 for g in gains.values()):
            outcome = "aborted"
        else:
            outcome = "partial"
        return RunResult(
            protocol=self.protocol, outcome=outcome, gains=gains, trace=self.loop.trace,
            contracts=self.loop.contracts, bytes_total=self.loop.bytes_total(), sim_ticks=end,
            wall_ms=(time.perf_counter() - started) * 1e3 + self.preprocess_ms,
            extra={"t_end": self.t_end},
        )


class HtlcRun(HashLockRun):
    protocol = "htlc"

    def prepare(self) -> None:
        self.secret = self.rng.randbytes(DIGEST_BYTES)
        digest = sha256(self.secret)
        for route in self.routes:
            route.digests = [digest] * len(route.vals)

    def receiver_openings(self):
        return {r.index: self.secret for r in self.routes}


class AmpRun(HashLockRun):
    protocol = "amp"

    def prepare(self) -> None:
        self.shares = AmpShares.generate(len(self.routes), self.rng)
        for route in self.routes:
            route.digests = [self.shares.lock(route.index).digest] * len(route.vals)

    def receiver_payload(self, route: Route) -> bytes:
        return (self.shares.shares[route.index]
                + _AMP_RECV.pack(route.index, len(self.routes), self.paths.val)
                + _RECV.pack(route.vals[-1], self.t_end))

    def receiver_openings(self):
        shares = []
        for r in self.routes:
            plain = self.arrived[r.index]
            shares.append(plain[:DIGEST_BYTES])
        master = AmpShares.reconstruct(shares)
        openings = {}
        for r in self.routes:
            pre = AmpShares.path_preimage(master, r.index)
            if sha256(pre) != r.digests[-1]:
                return None
            openings[r.index] = pre
        return openings


class MhHtlcRun(HashLockRun):
    protocol = "mhhtlc"

    def __init__(self, *args, proof_bytes: int = DEFAULT_PROOF_BYTES,
                 faulty_proofs: set[int] | None = None, **kwargs):
        if proof_bytes < 0:
            raise ValueError("proof size must be non-negative")
        self.proof_bytes = proof_bytes
        self.faulty_proofs = set(faulty_proofs or ())
        super().__init__(*args, **kwargs)

    def prepare(self) -> None:
        self.chains = {}
        for route in self.routes:
            chain = MhHtlcChain.generate(len(route.vals), self.rng)
            self.chains[route.index] = chain
            route.digests = list(chain.ys)
        self.proof_ok: dict[tuple[int, int], bool] = {}

    def receiver_openings(self):
        return {r.index: self.chains[r.index].xs[-1] for r in self.routes}

    def upstream_preimage(self, route: Route, hop: int, preimage: bytes) -> bytes:
        # hop h holds x_h and receives the preimage of y_{h+1}; chains are 0-indexed by edge
        return xor_bytes(self.chains[route.index].xs[hop - 1], preimage)

    def setup(self) -> None:
        sender = self.paths.source
        for route in self.routes:
            chain = self.chains[route.index]
            for h in range(1, len(route.nodes) - 1):
                node = route.nodes[h]
                # intermediary h owns the incoming edge h-1: (x, y_in, y_out, proof)
                body = (chain.xs[h - 1] + chain.ys[h - 1] + chain.ys[h]
                        + _SETUP_HEAD.pack(self.proof_bytes) + bytes(self.proof_bytes))
                sealed = seal(self.keys.public(node), body, self.rng).to_bytes()
                self.loop.send(sender, node, "setup", None, sealed, self._on_setup,
                               route.index, h, node)
                self.proof_ok[(route.index, h)] = False

    def _on_setup(self, index: int, hop: int, node: int) -> None:
        # proof verification is delegated to a trusted dealer bit
        self.proof_ok[(index, hop)] = node not in self.faulty_proofs

    def hop_ready(self, route: Route, hop: int) -> bool:
        return self.proof_ok.get((route.index, hop), False)


def _single(paths_or_path, graph: PaymentGraph, val: int) -> PathSet:
    if isinstance(paths_or_path, PathSet):
        return paths_or_path
    path = tuple(paths_or_path)
    if len(path) < 2:
        raise EmptyPath("path needs at least one hop")
    return PathSet(path[0], path[-1], val, (path,), (val,))


def run_htlc(graph: PaymentGraph, path, val: int, config: SimConfig | None = None,
             behaviors=None, colluders=None, keys=None) -> RunResult:
    paths = _single(path, graph, val)
    if len(paths.paths) != 1:
        raise BaselineError("HTLC is a single-path protocol")
    return HtlcRun(graph, paths, config, behaviors, colluders, keys).run()


def run_amp(graph: PaymentGraph, paths: PathSet, config: SimConfig | None = None,
            behaviors=None, keys=None) -> RunResult:
    return AmpRun(graph, paths, config, behaviors, None, keys).run()


def run_mh_htlc(graph: PaymentGraph, paths: PathSet, config: SimConfig | None = None,
                behaviors=None, keys=None, proof_bytes: int = DEFAULT_PROOF_BYTES,
                faulty_proofs=None) -> RunResult:
    return MhHtlcRun(graph, paths, config, behaviors, None, keys, proof_bytes=proof_bytes,
                     faulty_proofs=faulty_proofs).run()
