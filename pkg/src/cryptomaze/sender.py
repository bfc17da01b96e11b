"""Payer-side preprocessing: conditions, timeouts already on the edge set, and onions.

Every condition is tracked together with the scalar ``a`` such that
``R = a*G + X_r`` where ``X_r`` is the receiver's point.  The payer never
needs a discrete log; it just carries ``a`` while building conditions in
reverse order, which is what makes the split adjustments computable.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field

from .group import (
    ORDER, POINT_BYTES, SCALAR_BYTES, SealedBlob, base_mul, decode_point, decode_scalar,
    encode_point, encode_scalar, hash_to_scalar, points_equal, random_scalar, seal,
)
from .routing import Edge, EdgeSet
from .timelock import OutgoingTerms, compute_release

WIRE_VERSION = 1
KIND_HOP = 1
KIND_RECEIVER = 2


class PreprocessingError(Exception):
    pass


class DegenerateEdgeSet(PreprocessingError):
    pass


class MissingKey(PreprocessingError):
    pass


class PayloadError(ValueError):
    pass


def receiver_init(rng: random.Random):
    """Receiver's claim secret and the point handed to the payer."""
    x_r = random_scalar(rng)
    return x_r, base_mul(x_r)


@dataclass
class ConditionTable:
    receiver_point: object
    conditions: dict[Edge, object] = field(default_factory=dict)
    dlogs: dict[Edge, int] = field(default_factory=dict)
    node_secrets: dict[int, int] = field(default_factory=dict)
    adjustments: dict[Edge, int] = field(default_factory=dict)
    split_points: dict[int, int] = field(default_factory=dict)
    shares: dict[Edge, int] = field(default_factory=dict)
    y: int = 0


def build_conditions(pc: EdgeSet, receiver_point, rng: random.Random) -> ConditionTable:
    """Build every contract condition from the receiver backwards."""
    if not pc.edges:
        raise DegenerateEdgeSet("empty edge set")
    incoming = pc.predecessors(pc.sink)
    if not incoming:
        raise DegenerateEdgeSet("receiver unreachable")
    table = ConditionTable(receiver_point)
    for b in incoming:
        table.shares[(b, pc.sink)] = random_scalar(rng)
    table.y = sum(table.shares.values()) % ORDER

    for i, j in reversed(pc.edges):
        cid = pc.channel(i, j)
        if j == pc.sink:
            e = hash_to_scalar(table.y, cid)
            a = e * table.y % ORDER
            table.conditions[(i, j)] = base_mul(a) + receiver_point
            table.dlogs[(i, j)] = a
            continue
        succ = pc.successors(j)
        if j not in table.node_secrets:
            if len(succ) == 1:
                x_j = random_scalar(rng)
                table.adjustments[(j, succ[0])] = x_j
            else:
                x_hat = random_scalar(rng)
                table.split_points[j] = x_hat
                for k in succ:
                    table.adjustments[(j, k)] = (x_hat - table.dlogs[(j, k)]) % ORDER
                x_j = sum(table.adjustments[(j, k)] for k in succ) % ORDER
            table.node_secrets[j] = x_j
        x_j = table.node_secrets[j]
        e = hash_to_scalar(x_j, cid)
        k = succ[0]
        cond = base_mul(e * x_j) + table.conditions[(j, k)]
        if len(succ) > 1:
            cond = cond + base_mul(table.adjustments[(j, k)])
            a = (e * x_j + table.split_points[j]) % ORDER
        else:
            a = (e * x_j + table.dlogs[(j, k)]) % ORDER
        table.conditions[(i, j)] = cond
        table.dlogs[(i, j)] = a
    return table


def simulate_release(table: ConditionTable, pc: EdgeSet, receiver_secret: int) -> dict[Edge, int]:
    """Run the release recursion offline; every successor must yield the same opening."""
    y = table.y
    openings: dict[Edge, int] = {}
    for i, j in reversed(pc.edges):
        cid = pc.channel(i, j)
        if j == pc.sink:
            openings[(i, j)] = compute_release(receiver_secret, y, cid)
            continue
        succ = pc.successors(j)
        x_j = table.node_secrets[j]
        candidates = set()
        for k in succ:
            r_next = openings[(j, k)]
            if len(succ) > 1:
                r_next = (r_next + table.adjustments[(j, k)]) % ORDER
            candidates.add(compute_release(r_next, x_j, cid))
        if len(candidates) != 1:
            raise PreprocessingError(f"successors of {j} disagree on the opening")
        openings[(i, j)] = candidates.pop()
    return openings


# -- onion payloads -------------------------------------------------------------------------


@dataclass(frozen=True)
class HopTuple:
    channel_id: int
    val: int
    x_adj: int
    condition: object
    timeout: int
    blob: SealedBlob

    def terms(self) -> OutgoingTerms:
        return OutgoingTerms(self.channel_id, self.x_adj, self.condition, self.timeout)


@dataclass(frozen=True)
class HopPayload:
    tuples: tuple[HopTuple, ...]


@dataclass(frozen=True)
class ReceiverPayload:
    share: int
    t_end: int


_HEADER = struct.Struct(">BBH")
_TUPLE_HEAD = struct.Struct(">QQ")
_TUPLE_TAIL = struct.Struct(">QI")
_RECEIVER = struct.Struct(">Q")


def encode_payload(payload: HopPayload | ReceiverPayload) -> bytes:
    """Version byte, kind byte, then fields in canonical group encodings."""
    if isinstance(payload, ReceiverPayload):
        return (_HEADER.pack(WIRE_VERSION, KIND_RECEIVER, 1) + encode_scalar(payload.share)
                + _RECEIVER.pack(payload.t_end))
    parts = [_HEADER.pack(WIRE_VERSION, KIND_HOP, len(payload.tuples))]
    for t in payload.tuples:
        blob = t.blob.to_bytes()
        parts.append(_TUPLE_HEAD.pack(t.channel_id, t.val))
        parts.append(encode_scalar(t.x_adj))
        parts.append(encode_point(t.condition))
        parts.append(_TUPLE_TAIL.pack(t.timeout, len(blob)))
        parts.append(blob)
    return b"".join(parts)


def decode_payload(data: bytes) -> HopPayload | ReceiverPayload:
    try:
        version, kind, count = _HEADER.unpack_from(data, 0)
        if version != WIRE_VERSION:
            raise PayloadError(f"unknown wire version {version}")
        pos = _HEADER.size
        if kind == KIND_RECEIVER:
            share = decode_scalar(data[pos:pos + SCALAR_BYTES])
            (t_end,) = _RECEIVER.unpack_from(data, pos + SCALAR_BYTES)
            if pos + SCALAR_BYTES + _RECEIVER.size != len(data):
                raise PayloadError("trailing bytes")
            return ReceiverPayload(share, t_end)
        if kind != KIND_HOP:
            raise PayloadError(f"unknown payload kind {kind}")
        tuples = []
        for _ in range(count):
            cid, val = _TUPLE_HEAD.unpack_from(data, pos)
            pos += _TUPLE_HEAD.size
            x_adj = decode_scalar(data[pos:pos + SCALAR_BYTES])
            pos += SCALAR_BYTES
            cond = decode_point(data[pos:pos + POINT_BYTES])
            pos += POINT_BYTES
            timeout, blob_len = _TUPLE_TAIL.unpack_from(data, pos)
            pos += _TUPLE_TAIL.size
            blob = SealedBlob.from_bytes(data[pos:pos + blob_len])
            if len(blob) != blob_len:
                raise PayloadError("truncated blob")
            pos += blob_len
            tuples.append(HopTuple(cid, val, x_adj, cond, timeout, blob))
        if pos != len(data):
            raise PayloadError("trailing bytes")
        return HopPayload(tuple(tuples))
    except struct.error as exc:
        raise PayloadError(str(exc)) from exc


@dataclass
class Onions:
    """Sealed blob per channel plus the payer's own (unsealed) outgoing list."""

    blobs: dict[Edge, SealedBlob]
    plaintexts: dict[Edge, bytes]
    sender_tuples: tuple[HopTuple, ...]


def _hop_tuples(node, table, pc, blobs):
    out = []
    for k in pc.successors(node):
        out.append(HopTuple(
            channel_id=pc.channel(node, k),
            val=pc.flow[(node, k)],
            x_adj=table.adjustments.get((node, k), 0),
            condition=table.conditions[(node, k)],
            timeout=pc.timeout[(node, k)],
            blob=blobs[(node, k)],
        ))
    return tuple(out)


def build_onions(table: ConditionTable, pc: EdgeSet, node_keys: dict, rng: random.Random,
                 t_end: int | None = None) -> Onions:
    """Seal each hop's successor list for it; merge nodes get identical plaintexts."""
    for node in pc.nodes():
        if node != pc.source and node not in node_keys:
            raise MissingKey(f"no public key for node {node}")
    if t_end is None:
        t_end = min(pc.timeout[(b, pc.sink)] for b in pc.predecessors(pc.sink))
    blobs: dict[Edge, SealedBlob] = {}
    plaintexts: dict[Edge, bytes] = {}
    node_payload: dict[int, bytes] = {}
    for i, j in reversed(pc.edges):
        if j == pc.sink:
            data = encode_payload(ReceiverPayload(table.shares[(i, j)], t_end))
        else:
            if j not in node_payload:
                node_payload[j] = encode_payload(HopPayload(_hop_tuples(j, table, pc, blobs)))
            data = node_payload[j]
        plaintexts[(i, j)] = data
        blobs[(i, j)] = seal(node_keys[j], data, rng)
    return Onions(blobs, plaintexts, _hop_tuples(pc.source, table, pc, blobs))


def check_equations(table: ConditionTable, pc: EdgeSet) -> list[Edge]:
    """Channels whose condition breaks the forwarding recursion or its tracked dlog."""
    bad = []
    X = table.receiver_point
    for i, j in pc.edges:
        cond = table.conditions[(i, j)]
        if not points_equal(cond, base_mul(table.dlogs[(i, j)]) + X):
            bad.append((i, j))
            continue
        cid = pc.channel(i, j)
        if j == pc.sink:
            e = hash_to_scalar(table.y, cid)
            ok = points_equal(cond, base_mul(e * table.y) + X)
        else:
            succ = pc.successors(j)
            x_j = table.node_secrets[j]
            blind = base_mul(hash_to_scalar(x_j, cid) * x_j)
            if len(succ) == 1:
                ok = points_equal(cond, blind + table.conditions[(j, succ[0])])
            else:
                ok = (x_j == sum(table.adjustments[(j, k)] for k in succ) % ORDER and all(
                    points_equal(cond, blind + table.conditions[(j, k)]
                                 + base_mul(table.adjustments[(j, k)]))
                    for k in succ))
        if not ok:
            bad.append((i, j))
    return bad
