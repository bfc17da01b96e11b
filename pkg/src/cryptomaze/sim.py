"""Deterministic discrete-event core shared by every protocol runner.

Time is an integer tick count.  Messages take ``delta`` ticks; ties are
broken by a global sequence number, which keeps delivery FIFO per sender and
recipient pair and makes a run a pure function of its inputs.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from .pcn import PaymentGraph, compute_gains


class State(str, Enum):
    LOCKED = "locked"
    RELEASED = "released"
    ABORTED = "aborted"
    EXPIRED = "expired"


@dataclass
class Contract:
    key: Any
    payer: int
    payee: int
    channel_id: int
    value: int
    timeout: int
    condition: Any = None
    verifier: Callable[[Any], bool] | None = None
    state: State = State.LOCKED
    opening: Any = None
    opened_at: int = 0
    closed_at: int | None = None

    def accepts(self, opening) -> bool:
        return self.verifier is not None and self.verifier(opening)


@dataclass
class TraceEvent:
    time: int
    src: int | None
    dst: int | None
    kind: str
    channel: int | None
    bytes: int = 0
    note: str = ""

    def to_json(self) -> str:
        rec = {"time": self.time, "from": self.src, "to": self.dst, "kind": self.kind,
               "channel": self.channel, "bytes": self.bytes}
        if self.note:
            rec["note"] = self.note
        return json.dumps(rec)


@dataclass
class RunResult:
    protocol: str
    outcome: str
    gains: dict[int, int]
    trace: list[TraceEvent]
    contracts: dict[Any, Contract]
    bytes_total: int
    sim_ticks: int
    wall_ms: float = 0.0
    routing_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n_contracts(self) -> int:
        return len(self.contracts)

    def events(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.trace if e.kind == kind]

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for ev in self.trace:
                fh.write(ev.to_json() + "\n")


class EventLoop:
    """Priority queue of callbacks keyed by (time, sequence)."""

    def __init__(self, graph: PaymentGraph, delta: int = 1):
        if delta < 1:
            raise ValueError("delta must be at least one tick")
        self.graph = graph
        self.delta = delta
        self.now = 0
        self._seq = 0
        self._queue: list = []
        self.trace: list[TraceEvent] = []
        self.contracts: dict[Any, Contract] = {}

    # scheduling

    def at(self, when: int, fn: Callable, *args) -> None:
        if when < self.now:
            raise ValueError("cannot schedule in the past")
        self._seq += 1
        heapq.heappush(self._queue, (when, self._seq, fn, args))

    def send(self, src: int, dst: int, kind: str, channel: int | None, wire: bytes,
             handler: Callable, *args) -> None:
        self.trace.append(TraceEvent(self.now, src, dst, kind, channel, len(wire)))
        self.at(self.now + self.delta, handler, *args)

    def note(self, kind: str, node: int | None = None, channel: int | None = None,
             note: str = "") -> None:
        self.trace.append(TraceEvent(self.now, node, None, kind, channel, 0, note))

    def run(self, limit: int = 10_000_000) -> int:
        steps = 0
        while self._queue:
            when, _, fn, args = heapq.heappop(self._queue)
            self.now = when
            fn(*args)
            steps += 1
            if steps > limit:
                raise RuntimeError("event limit exceeded")
        return self.now

    # contracts

    def open_contract(self, key, payer: int, payee: int, value: int, timeout: int,
                      condition=None, verifier=None, on_expire: Callable | None = None) -> Contract:
        """Escrow ``value`` on the payer's side and arm the timeout refund."""
        if key in self.contracts:
            raise ValueError(f"contract {key!r} already exists")
        self.graph.lock(payer, payee, value)
        c = Contract(key, payer, payee, self.graph.channel_id(payer, payee), value, timeout,
                     condition, verifier, opened_at=self.now)
        self.contracts[key] = c
        self.at(max(timeout + 1, self.now), self._expire, key, on_expire)
        return c

    def _expire(self, key, on_expire) -> None:
        c = self.contracts[key]
        if c.state is not State.LOCKED:
            return
        self.graph.unlock(c.payer, c.payee, c.value)
        c.state = State.EXPIRED
        c.closed_at = self.now
        self.note("expired", c.payer, c.channel_id)
        if on_expire is not None:
            on_expire(c)

    def release(self, key, opening) -> bool:
        """Pay the payee if ``opening`` satisfies the contract; refuse otherwise."""
        c = self.contracts[key]
        if c.state is not State.LOCKED:
            return False
        if not c.accepts(opening):
            return False
        self.graph.settle(c.payer, c.payee, c.value)
        c.state = State.RELEASED
        c.opening = opening
        c.closed_at = self.now
        return True

    def cancel(self, key) -> bool:
        c = self.contracts[key]
        if c.state is not State.LOCKED:
            return False
        self.graph.unlock(c.payer, c.payee, c.value)
        c.state = State.ABORTED
        c.closed_at = self.now
        return True

    def live(self, key) -> bool:
        c = self.contracts.get(key)
        return c is not None and c.state is State.LOCKED

    def bytes_total(self) -> int:
        return sum(e.bytes for e in self.trace)


def gains_between(before: PaymentGraph, after: PaymentGraph) -> dict[int, int]:
    return compute_gains(before, after)
