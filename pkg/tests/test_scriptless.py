import random

import pytest
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import encode_dss_signature

import oracles
from cryptomaze.group import IDENTITY, ORDER, base_mul, random_scalar
from cryptomaze.scriptless import (
    AlreadyLocked, DegenerateCondition, DuplicateSession, EcdsaLockFunctionality, NoKey,
    NotLocked, complete_signature, message_hash,
)


def _openssl_verify(pk, m, sig):
    pub = ec.EllipticCurvePublicNumbers(int(pk.x()), int(pk.y()), ec.SECP224R1()).public_key()
    try:
        pub.verify(encode_dss_signature(*sig), m, ec.ECDSA(hashes.SHA256()))
        return True
    except InvalidSignature:
        return False


@pytest.fixture
def locked():
    rng = random.Random(9)
    f = EcdsaLockFunctionality(rng)
    key = f.keygen("s")
    r = random_scalar(rng)
    presig = f.lock("s", b"close channel", base_mul(r))
    return f, key, r, presig


def test_release_completes_valid_signature(locked):
    f, key, r, presig = locked
    assert f.verify("s", b"close channel", r, presig, key.pk)
    sig = complete_signature(presig, r)
    assert _openssl_verify(key.pk, b"close channel", sig)
    pub = (int(key.pk.x()), int(key.pk.y()))
    assert oracles.textbook_ecdsa_verify(pub, message_hash(b"close channel"), *sig)


def test_wrong_opening_rejected(locked):
    f, key, r, presig = locked
    assert not f.verify("s", b"close channel", r + 1, presig, key.pk)
    assert not f.verify("s", b"close channel", 0, presig, key.pk)
    assert not f.verify("s", b"other", r, presig, key.pk)
    assert not _openssl_verify(key.pk, b"close channel", complete_signature(presig, r + 1))


def test_session_errors(locked):
    f, _, r, _ = locked
    with pytest.raises(DuplicateSession):
        f.keygen("s")
    with pytest.raises(AlreadyLocked):
        f.lock("s", b"m", base_mul(r))
    with pytest.raises(NoKey):
        f.lock("unknown", b"m", base_mul(r))
    f.keygen("t")
    with pytest.raises(NotLocked):
        f.verify("t", b"m", r, None, None)


def test_identity_condition_rejected():
    f = EcdsaLockFunctionality(random.Random(0))
    f.keygen("s")
    with pytest.raises(DegenerateCondition):
        f.lock("s", b"m", IDENTITY)


def test_message_hash_truncates_to_order_bits():
    assert message_hash(b"x").bit_length() <= ORDER.bit_length()
