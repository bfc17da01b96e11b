import random

import pytest

import oracles
from cryptomaze import Behavior, SimConfig, run_payment, run_simulation
from cryptomaze.engine import WORMHOLE_BLOCKED, CryptoMazeRun, KeyDirectory, prepare
from cryptomaze.fixtures import (
    A, B, C, D, EXAMPLE_NAMES, EXAMPLE_VALUE, M, N, chain_graph, diamond_graph,
)
from cryptomaze.sim import State


def _by_name(gains):
    return {EXAMPLE_NAMES[n]: g for n, g in gains.items()}


def _zero(gains):
    return all(g == 0 for g in gains.values())


@pytest.mark.parametrize("mechanism", ["point", "ecdsa"])
def test_golden_run(mechanism):
    g = diamond_graph()
    res = run_payment(g, M, N, EXAMPLE_VALUE, SimConfig(lock_mechanism=mechanism))
    assert res.outcome == "success"
    assert _by_name(res.gains) == oracles.EXAMPLE_GAINS
    assert res.n_contracts == 6
    assert res.sim_ticks == 8
    assert g.total_escrow() == 0
    assert all(c.state is State.RELEASED for c in res.contracts.values())


def test_deterministic_trace():
    runs = [run_payment(diamond_graph(), M, N, EXAMPLE_VALUE, SimConfig(seed=4)) for _ in range(2)]
    assert [e.to_json() for e in runs[0].trace] == [e.to_json() for e in runs[1].trace]


def test_trace_file(tmp_path):
    res = run_payment(diamond_graph(), M, N, EXAMPLE_VALUE)
    path = tmp_path / "trace.jsonl"
    res.write_trace(path)
    assert len(path.read_text().splitlines()) == len(res.trace)


@pytest.mark.parametrize("node, behavior, marker", [
    (B, Behavior.DROP_FORWARD, "dropped"),
    (D, Behavior.DROP_FORWARD, "dropped"),
    (C, Behavior.TAMPER, "auth-failure"),
    (N, Behavior.WITHHOLD_RELEASE, "withheld"),
])
def test_failures_refund_everyone(node, behavior, marker):
    g = diamond_graph()
    res = run_payment(g, M, N, EXAMPLE_VALUE, behaviors={node: behavior})
    assert res.outcome == "aborted"
    assert _zero(res.gains)
    assert g.total_escrow() == 0
    assert res.events(marker)


def test_intermediary_withholding_only_hurts_itself():
    g = diamond_graph()
    res = run_payment(g, M, N, EXAMPLE_VALUE, behaviors={C: Behavior.WITHHOLD_RELEASE})
    assert sum(res.gains.values()) == 0
    assert res.gains[C] < 0
    assert all(res.gains[n] >= 0 for n in (A, B, D, N))
    assert res.gains[N] == EXAMPLE_VALUE


def test_observe_only_is_honest():
    res = run_payment(diamond_graph(), M, N, EXAMPLE_VALUE, behaviors={A: Behavior.OBSERVE_ONLY})
    assert _by_name(res.gains) == oracles.EXAMPLE_GAINS


def test_late_release_is_refused():
    g = diamond_graph()
    res = run_payment(g, M, N, EXAMPLE_VALUE, SimConfig(t_end=4))
    assert res.outcome == "aborted" and _zero(res.gains)
    assert res.events("late-release")
    assert g.total_escrow() == 0


def test_wormhole_blocked_on_chain():
    g = chain_graph(7)
    res = run_payment(g, 0, 7, 10**8, colluders=(2, 5))
    assert res.outcome == "success"
    assert res.events(WORMHOLE_BLOCKED)
    assert res.gains[3] == res.gains[4] == g.fee(3)


def test_observations_reconstruct_payload():
    g = diamond_graph()
    config = SimConfig()
    _, pc, _ = prepare(g, M, N, EXAMPLE_VALUE, config)
    run = CryptoMazeRun(g, pc, config, behaviors={B: Behavior.OBSERVE_ONLY})
    run.run()
    assert any(r["kind"] == "forward" for r in run.observations[B])


def test_sequential_payments_share_graph():
    g = chain_graph(3)
    results = run_simulation(g, [(0, 3, 10**8), (3, 0, 10**8)])
    assert [r.outcome for r in results] == ["success", "success"]


def test_key_directory_deterministic():
    assert KeyDirectory(1).secret(5) == KeyDirectory(1).secret(5)
    assert KeyDirectory(1).secret(5) != KeyDirectory(2).secret(5)


@pytest.mark.parametrize("kwargs", [
    dict(delta=0), dict(Delta=0), dict(lock_mechanism="rsa"), dict(max_paths=0), dict(t_end=-1),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_mixed_failures_on_random_chains():
    rng = random.Random(11)
    for _ in range(10):
        g = chain_graph(5)
        node = rng.randint(1, 4)
        behavior = rng.choice([Behavior.DROP_FORWARD, Behavior.TAMPER])
        res = run_payment(g, 0, 5, 10**8, behaviors={node: behavior})
        assert res.outcome == "aborted" and _zero(res.gains) and g.total_escrow() == 0
