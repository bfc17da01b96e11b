import json
import random

import pytest

from cryptomaze.pcn import (
    InsufficientCapacity, InvalidParam, ParseError, PaymentGraph, TopologyMismatch,
    ValidationError, coins, compute_gains, generate_ba, load_snapshot, parse_snapshot,
    save_snapshot,
)


def _doc():
    return {
        "nodes": [{"id": 0, "name": "a"}, {"id": 1}, {"id": 2}],
        "channels": [{"id": 10, "u": 0, "v": 1, "cap_uv": 5, "cap_vu": 3},
                     {"id": 11, "u": 1, "v": 2, "cap_uv": 4, "cap_vu": 0}],
        "fees": [{"node": 1, "fee": 2}],
    }


def test_coins():
    assert coins("5.1") == 510_000_000
    assert coins(1) == 100_000_000


def test_parse_snapshot():
    g = parse_snapshot(_doc())
    assert g.channel_id(1, 0) == 10
    assert g.capacity[(1, 0)] == 3
    assert g.fee(1) == 2
    assert g.label(0) == "a"


def test_snapshot_roundtrip(tmp_path):
    g = parse_snapshot(_doc())
    path = tmp_path / "g.json"
    save_snapshot(g, path)
    h = load_snapshot(path)
    assert h.channels == g.channels and h.capacity == g.capacity and h.fees == g.fees


def test_repeated_channel_record_updates_capacity():
    doc = _doc()
    doc["channels"].append({"id": 10, "u": 1, "v": 0, "cap_uv": 7, "cap_vu": 9})
    g = parse_snapshot(doc)
    assert g.capacity[(0, 1)] == 9 and g.capacity[(1, 0)] == 7


@pytest.mark.parametrize("mutate, exc", [
    (lambda d: d["channels"][0].pop("cap_uv"), ParseError),
    (lambda d: d["channels"][0].update(cap_uv="5"), ParseError),
    (lambda d: d["channels"][0].update(cap_uv=-1), ValidationError),
    (lambda d: d["channels"][0].update(v=99), ValidationError),
    (lambda d: d["fees"].append({"node": 0, "fee": -1}), ValidationError),
    (lambda d: d.update(nodes=[]), ValidationError),
    (lambda d: d.update(nodes="x"), ParseError),
])
def test_parse_errors(mutate, exc):
    doc = _doc()
    mutate(doc)
    with pytest.raises(exc):
        parse_snapshot(doc)


def test_bad_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"nodes": [\n  {"id": 1,}\n]}')
    with pytest.raises(ParseError, match="line 2"):
        load_snapshot(path)


def test_self_loop_rejected():
    with pytest.raises(ValidationError):
        PaymentGraph().add_channel(1, 1, 1, 1)


def test_escrow_lifecycle():
    g = parse_snapshot(_doc())
    before = g.copy()
    g.lock(0, 1, 4)
    assert g.capacity[(0, 1)] == 1 and g.total_escrow() == 4
    with pytest.raises(InsufficientCapacity):
        g.lock(0, 1, 2)
    g.settle(0, 1, 3)
    g.unlock(0, 1, 1)
    assert g.total_escrow() == 0
    gains = compute_gains(before, g)
    assert gains == {0: -3, 1: 3, 2: 0}


def test_compute_gains_topology_mismatch():
    g = parse_snapshot(_doc())
    h = g.copy()
    h.add_channel(0, 2, 1, 1)
    with pytest.raises(TopologyMismatch):
        compute_gains(g, h)


def test_generate_ba_deterministic():
    a = generate_ba(200, 3, random.Random(5))
    b = generate_ba(200, 3, 5)
    assert a.channels == b.channels and a.capacity == b.capacity
    assert a.number_of_nodes() == 200
    assert a.number_of_channels() == (200 - 3) * 3
    assert all(c >= 0 for c in a.capacity.values())


@pytest.mark.parametrize("n, m", [(5, 0), (5, 5)])
def test_generate_ba_invalid(n, m):
    with pytest.raises(InvalidParam):
        generate_ba(n, m, 0)


def test_proportional_fee():
    g = PaymentGraph(fee_mode="proportional", fee_rate_ppm=1000)
    g.add_node(1, 5)
    assert g.fee(1, 1_000_000) == 5 + 1000
