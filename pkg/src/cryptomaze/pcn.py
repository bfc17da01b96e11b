"""Bidirected payment channel graph with escrow bookkeeping.

Amounts are integer base units (``UNIT`` base units per coin), so gains
sum to exactly zero after every run.
"""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import networkx as nx

UNIT = 100_000_000


def coins(amount: float | str) -> int:
    """Convert a decimal coin amount to base units (``coins("0.1") == 10_000_000``)."""
    from decimal import Decimal

    return int((Decimal(str(amount)) * UNIT).to_integral_value())


class PCNError(Exception):
    pass


class ParseError(PCNError):
    pass


class ValidationError(PCNError):
    pass


class InvalidParam(PCNError):
    pass


class InsufficientCapacity(PCNError):
    pass


class TopologyMismatch(PCNError):
    pass


@dataclass
class PaymentGraph:
    """Channels keyed by numeric id; capacities and escrow keyed by direction ``(u, v)``.

    ``fee_mode`` is ``"fixed"`` (flat per-node amount) or ``"proportional"``
    (flat amount plus ``fee_rate_ppm`` parts-per-million of the forwarded value).
    """

    nodes: set = field(default_factory=set)
    channels: dict = field(default_factory=dict)
    capacity: dict = field(default_factory=dict)
    escrow: dict = field(default_factory=dict)
    fees: dict = field(default_factory=dict)
    fee_mode: str = "fixed"
    fee_rate_ppm: int = 0
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self._pair_to_id: dict[tuple[int, int], int] = {}
        self._adj: dict[int, list[int]] = {}
        self._next_id = max(self.channels, default=-1) + 1
        for cid, (u, v) in self.channels.items():
            self._index(cid, u, v)

    def _index(self, cid, u, v):
        self._pair_to_id[(u, v)] = cid
        self._pair_to_id[(v, u)] = cid
        self._adj.setdefault(u, []).append(v)
        self._adj.setdefault(v, []).append(u)

    # -- construction -------------------------------------------------

    def add_node(self, node: int, fee: int = 0, name: str | None = None) -> None:
        self.nodes.add(node)
        self.fees.setdefault(node, fee)
        self._adj.setdefault(node, [])
        if name is not None:
            self.names[node] = name

    def add_channel(self, u: int, v: int, cap_uv: int, cap_vu: int,
                    channel_id: int | None = None) -> int:
        if u == v:
            raise ValidationError(f"self-loop channel on node {u}")
        if cap_uv < 0 or cap_vu < 0:
            raise ValidationError(f"negative capacity on channel {u}-{v}")
        for node in (u, v):
            if node not in self.nodes:
                self.add_node(node)
        existing = self._pair_to_id.get((u, v))
        if existing is not None:
            # parallel channels collapse into one logical edge
            self.capacity[(u, v)] += cap_uv
            self.capacity[(v, u)] += cap_vu
            return existing
        if channel_id is None:
            channel_id = self._next_id
            while channel_id in self.channels:
                channel_id += 1
        if channel_id in self.channels:
            raise ValidationError(f"duplicate channel id {channel_id}")
        self.channels[channel_id] = (u, v)
        self._next_id = max(self._next_id, channel_id + 1)
        self.capacity[(u, v)] = cap_uv
        self.capacity[(v, u)] = cap_vu
        self.escrow[(u, v)] = 0
        self.escrow[(v, u)] = 0
        self._index(channel_id, u, v)
        return channel_id

    # -- queries --------------------------------------------------------

    def channel_id(self, u: int, v: int) -> int:
        try:
            return self._pair_to_id[(u, v)]
        except KeyError:
            raise KeyError(f"no channel between {u} and {v}") from None

    def has_channel(self, u: int, v: int) -> bool:
        return (u, v) in self._pair_to_id

    def neighbors(self, u: int) -> list[int]:
        return sorted(self._adj.get(u, ()))

    def fee(self, node: int, forwarded: int = 0) -> int:
        base = self.fees.get(node, 0)
        if self.fee_mode == "proportional":
            return base + forwarded * self.fee_rate_ppm // 1_000_000
        return base

    def label(self, node: int) -> str:
        return self.names.get(node, str(node))

    def node_by_name(self, name: str) -> int:
        for node, label in self.names.items():
            if label == name:
                return node
        raise KeyError(name)

    def copy(self) -> "PaymentGraph":
        return copy.deepcopy(self)

    def number_of_nodes(self) -> int:
        return len(self.nodes)

    def number_of_channels(self) -> int:
        return len(self.channels)

    # -- escrow -----------------------------------------------------------

    def lock(self, u: int, v: int, amount: int) -> None:
        """Move ``amount`` from ``u``'s side of the channel into escrow."""
        if amount < 0:
            raise ValueError("negative amount")
        if self.capacity[(u, v)] < amount:
            raise InsufficientCapacity(
                f"C({u},{v})={self.capacity[(u, v)]} < {amount}")
        self.capacity[(u, v)] -= amount
        self.escrow[(u, v)] += amount

    def unlock(self, u: int, v: int, amount: int) -> None:
        """Refund escrowed ``amount`` to ``u``."""
        if self.escrow[(u, v)] < amount:
            raise PCNError(f"escrow({u},{v}) below {amount}")
        self.escrow[(u, v)] -= amount
        self.capacity[(u, v)] += amount

    def settle(self, u: int, v: int, amount: int) -> None:
        """Pay escrowed ``amount`` to ``v``."""
        if self.escrow[(u, v)] < amount:
            raise PCNError(f"escrow({u},{v}) below {amount}")
        self.escrow[(u, v)] -= amount
        self.capacity[(v, u)] += amount

    def total_escrow(self) -> int:
        return sum(self.escrow.values())


GainLedger = dict


def compute_gains(before: PaymentGraph, after: PaymentGraph) -> dict[int, int]:
    """Per-node change of outgoing channel balances between two graph states."""
    if before.nodes != after.nodes or before.channels != after.channels:
        raise TopologyMismatch("graphs differ in nodes or channels")
    gains = {node: 0 for node in before.nodes}
    for (u, v), cap in after.capacity.items():
        gains[u] += cap - before.capacity[(u, v)]
    return gains


# -- snapshot I/O ---------------------------------------------------------------


def _field(record: dict, key: str, where: str):
    if not isinstance(record, dict):
        raise ParseError(f"{where}: expected an object")
    if key not in record:
        raise ParseError(f"{where}.{key}: missing field")
    value = record[key]
    if not isinstance(value, int) or isinstance(value, bool):
        raise ParseError(f"{where}.{key}: expected integer, got {value!r}")
    return value


def parse_snapshot(doc: dict, fee_mode: str = "fixed", default_fee: int = 0) -> PaymentGraph:
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")
    nodes = doc.get("nodes")
    if not isinstance(nodes, list):
        raise ParseError("nodes: expected a list")
    if not nodes:
        raise ValidationError("snapshot has no nodes")
    graph = PaymentGraph(fee_mode=fee_mode)
    for i, rec in enumerate(nodes):
        node = _field(rec, "id", f"nodes[{i}]")
        graph.add_node(node, default_fee, rec.get("name"))
    seen: dict[int, tuple[int, int]] = {}
    for i, rec in enumerate(doc.get("channels", [])):
        where = f"channels[{i}]"
        cid = _field(rec, "id", where)
        u, v = _field(rec, "u", where), _field(rec, "v", where)
        cap_uv, cap_vu = _field(rec, "cap_uv", where), _field(rec, "cap_vu", where)
        if cap_uv < 0 or cap_vu < 0:
            raise ValidationError(f"{where}: negative capacity")
        for node in (u, v):
            if node not in graph.nodes:
                raise ValidationError(f"{where}: unknown node {node}")
        if cid in seen:
            # repeated record for the same channel: later entry updates capacities
            if {u, v} != set(seen[cid]):
                raise ValidationError(f"{where}: channel {cid} endpoints changed")
            pu, pv = seen[cid]
            if (u, v) != (pu, pv):
                cap_uv, cap_vu = cap_vu, cap_uv
            graph.capacity[(pu, pv)] = cap_uv
            graph.capacity[(pv, pu)] = cap_vu
            continue
        seen[cid] = (u, v)
        graph.add_channel(u, v, cap_uv, cap_vu, channel_id=cid)
    for i, rec in enumerate(doc.get("fees", [])):
        node = _field(rec, "node", f"fees[{i}]")
        fee = _field(rec, "fee", f"fees[{i}]")
        if fee < 0:
            raise ValidationError(f"fees[{i}]: negative fee")
        if node not in graph.nodes:
            raise ValidationError(f"fees[{i}]: unknown node {node}")
        graph.fees[node] = fee
    if "fee_rate_ppm" in doc:
        graph.fee_rate_ppm = int(doc["fee_rate_ppm"])
    return graph


def load_snapshot(path: str | Path, fee_mode: str = "fixed", default_fee: int = 0) -> PaymentGraph:
    """Read the JSON snapshot format (nodes, channels with two capacities, fees)."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_snapshot(doc, fee_mode=fee_mode, default_fee=default_fee)


def snapshot_dict(graph: PaymentGraph) -> dict:
    nodes = []
    for node in sorted(graph.nodes):
        rec = {"id": node}
        if node in graph.names:
            rec["name"] = graph.names[node]
        nodes.append(rec)
    channels = [
        {"id": cid, "u": u, "v": v,
         "cap_uv": graph.capacity[(u, v)], "cap_vu": graph.capacity[(v, u)]}
        for cid, (u, v) in sorted(graph.channels.items())
    ]
    fees = [{"node": n, "fee": graph.fees.get(n, 0)} for n in sorted(graph.nodes)]
    return {"nodes": nodes, "channels": channels, "fees": fees}


def save_snapshot(graph: PaymentGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(snapshot_dict(graph)))


# -- synthetic graphs -----------------------------------------------------------


def lognormal_capacity(median: int = coins("0.05"), sigma: float = 1.0) -> Callable[[random.Random], int]:
    """Heavy-tailed per-direction capacity sampler."""
    mu = math.log(median)

    def draw(rng: random.Random) -> int:
        return int(rng.lognormvariate(mu, sigma))

    return draw


def generate_ba(n: int, m_attach: int, rng: random.Random | int,
                capacity_dist: Callable[[random.Random], int] | None = None,
                fee: int = 1_000) -> PaymentGraph:
    """Barabasi-Albert channel graph with sampled per-direction capacities."""
    if m_attach < 1 or m_attach >= n:
        raise InvalidParam(f"need 1 <= m_attach < n, got n={n}, m_attach={m_attach}")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    draw = capacity_dist or lognormal_capacity()
    topology = nx.barabasi_albert_graph(n, m_attach, seed=rng)
    graph = PaymentGraph()
    for node in range(n):
        graph.add_node(node, fee)
    for u, v in sorted(tuple(sorted(e)) for e in topology.edges()):
        graph.add_channel(u, v, draw(rng), draw(rng))
    return graph


def from_edges(edges: Iterable[tuple[int, int, int, int]], fees: dict[int, int],
               names: dict[int, str] | None = None) -> PaymentGraph:
    graph = PaymentGraph()
    for node, fee in fees.items():
        graph.add_node(node, fee, (names or {}).get(node))
    for u, v, cap_uv, cap_vu in edges:
        graph.add_channel(u, v, cap_uv, cap_vu)
    return graph
