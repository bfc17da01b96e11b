import random

import pytest
from hypothesis import given, strategies as st

import oracles
from cryptomaze.group import (
    IDENTITY, ORDER, AuthFailure, DecodeError, HopKeyPair, SealedBlob, base_mul, decode_point,
    decode_scalar, encode_point, encode_scalar, hash_to_scalar, points_equal, seal, sealed_size,
    unseal,
)

scalars = st.integers(min_value=1, max_value=ORDER - 1)


@given(scalars)
def test_point_roundtrip(k):
    pt = base_mul(k)
    assert points_equal(decode_point(encode_point(pt)), pt)


def test_identity_encoding():
    assert encode_point(IDENTITY) == b"\x00"
    assert decode_point(b"\x00") == IDENTITY
    assert base_mul(ORDER) == IDENTITY


@pytest.mark.parametrize("data", [b"", b"\x02" * 3, b"\x05" + bytes(28), b"\x04" + bytes(56)])
def test_decode_point_rejects(data):
    with pytest.raises(DecodeError):
        decode_point(data)


def test_scalar_encoding():
    assert decode_scalar(encode_scalar(12345)) == 12345
    with pytest.raises(DecodeError):
        decode_scalar(bytes(31))
    with pytest.raises(DecodeError):
        decode_scalar(ORDER.to_bytes(32, "big"))


@given(scalars, scalars)
def test_linearity_matches_affine_oracle(a, b):
    lhs = base_mul(a) + base_mul(b)
    expected = oracles.add(oracles.mul(a), oracles.mul(b))
    assert encode_point(lhs) == oracles.compressed(expected)


def test_hash_to_scalar_depends_on_channel():
    assert hash_to_scalar(7, 1) != hash_to_scalar(7, 2)
    assert 0 <= hash_to_scalar(7, 1) < ORDER


def test_seal_roundtrip_and_size():
    rng = random.Random(1)
    kp = HopKeyPair.generate(rng)
    blob = seal(kp.public, b"hello", rng)
    assert len(blob) == sealed_size(5) == 5 + 45
    assert unseal(kp.secret, SealedBlob.from_bytes(blob.to_bytes())) == b"hello"


def test_unseal_wrong_key_or_tamper():
    rng = random.Random(2)
    kp, other = HopKeyPair.generate(rng), HopKeyPair.generate(rng)
    blob = seal(kp.public, b"payload", rng)
    with pytest.raises(AuthFailure):
        unseal(other.secret, blob)
    bad = SealedBlob(blob.ephemeral, blob.ciphertext[:-1] + bytes([blob.ciphertext[-1] ^ 1]))
    with pytest.raises(AuthFailure):
        unseal(kp.secret, bad)


def test_seal_is_randomised():
    rng = random.Random(3)
    kp = HopKeyPair.generate(rng)
    assert seal(kp.public, b"x", rng).to_bytes() != seal(kp.public, b"x", rng).to_bytes()
