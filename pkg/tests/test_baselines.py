import random

import pytest
from hypothesis import given, strategies as st

from cryptomaze import Behavior, SimConfig
from cryptomaze.baselines import (
    DEFAULT_PROOF_BYTES, AmpShares, BaselineError, EmptyPath, HashLock, MhHtlcChain, run_amp,
    run_htlc, run_mh_htlc, sha256,
)
from cryptomaze.engine import prepare, run_payment
from cryptomaze.fixtures import B, C, EXAMPLE_VALUE, M, N, chain_graph, diamond_graph
from cryptomaze.pcn import coins


@pytest.fixture
def diamond_paths():
    paths, _, _ = prepare(diamond_graph(), M, N, EXAMPLE_VALUE, SimConfig())
    return paths


def _zero(gains):
    return all(g == 0 for g in gains.values())


def test_htlc_chain_success():
    g = chain_graph(4)
    res = run_htlc(g, range(5), coins("1"))
    assert res.outcome == "success"
    assert res.gains[4] == coins("1") and res.gains[0] == -coins("1.03")
    assert g.total_escrow() == 0


def test_htlc_collusion_steals_skipped_fees():
    g = chain_graph(7)
    res = run_htlc(g, range(8), coins("1"), colluders=(2, 5))
    assert res.gains[3] == res.gains[4] == 0
    assert res.gains[2] + res.gains[5] == 4 * g.fee(3)
    assert sum(res.gains.values()) == 0


def test_htlc_receiver_withholds():
    g = chain_graph(3)
    res = run_htlc(g, range(4), coins("1"), behaviors={3: Behavior.WITHHOLD_RELEASE})
    assert res.outcome == "aborted" and _zero(res.gains) and g.total_escrow() == 0


def test_htlc_rejects_multipath(diamond_paths):
    with pytest.raises(BaselineError):
        run_htlc(diamond_graph(), diamond_paths, EXAMPLE_VALUE)


def test_zero_length_path():
    with pytest.raises(EmptyPath):
        run_htlc(chain_graph(2), [0], 1)
    with pytest.raises(EmptyPath):
        MhHtlcChain.generate(0, random.Random(0))


def test_amp_diamond(diamond_paths):
    g = diamond_graph()
    res = run_amp(g, diamond_paths)
    assert res.outcome == "success"
    assert res.n_contracts == 8
    assert res.gains[N] == EXAMPLE_VALUE and sum(res.gains.values()) == 0


@pytest.mark.parametrize("node, behavior", [(B, Behavior.DROP_FORWARD), (N, Behavior.WITHHOLD_RELEASE),
                                            (C, Behavior.TAMPER)])
def test_amp_failure_refunds(diamond_paths, node, behavior):
    g = diamond_graph()
    res = run_amp(g, diamond_paths, behaviors={node: behavior})
    assert res.outcome == "aborted" and _zero(res.gains) and g.total_escrow() == 0


@given(st.integers(1, 8), st.integers(0, 2**32))
def test_amp_shares_reconstruct(n, seed):
    shares = AmpShares.generate(n, random.Random(seed))
    assert AmpShares.reconstruct(shares.shares) == shares.master
    for i in range(n):
        assert shares.lock(i).opens(AmpShares.path_preimage(shares.master, i))


def test_amp_shares_have_no_fixed_bits():
    rng = random.Random(0)
    ones = [0] * 256
    runs = 400
    for _ in range(runs):
        share = AmpShares.generate(3, rng).shares[0]
        bits = int.from_bytes(share, "big")
        for b in range(256):
            ones[b] += bits >> b & 1
    assert all(0 < c < runs for c in ones)


def test_hash_lock():
    lock = HashLock.from_preimage(b"r")
    assert lock.opens(b"r") and not lock.opens(b"s") and not lock.opens(None)


@given(st.integers(1, 10), st.integers(0, 2**32))
def test_mh_chain_consistent(hops, seed):
    chain = MhHtlcChain.generate(hops, random.Random(seed))
    assert chain.consistent()
    assert sha256(chain.preimage(hops - 1)) == chain.ys[-1]


def test_mh_htlc_diamond(diamond_paths):
    cm = run_payment(diamond_graph(), M, N, EXAMPLE_VALUE)
    res = run_mh_htlc(diamond_graph(), diamond_paths)
    assert res.outcome == "success" and res.n_contracts == 8
    assert res.gains == cm.gains
    assert res.bytes_total > 100 * cm.bytes_total
    small = run_mh_htlc(diamond_graph(), diamond_paths, proof_bytes=0)
    assert res.bytes_total - small.bytes_total == 6 * DEFAULT_PROOF_BYTES


def test_mh_htlc_faulty_proof_aborts(diamond_paths):
    g = diamond_graph()
    res = run_mh_htlc(g, diamond_paths, faulty_proofs={B})
    assert res.outcome == "aborted" and _zero(res.gains) and g.total_escrow() == 0


def test_mh_htlc_negative_proof_size(diamond_paths):
    with pytest.raises(ValueError):
        run_mh_htlc(diamond_graph(), diamond_paths, proof_bytes=-1)
