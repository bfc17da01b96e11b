"""Prime-order group helpers, blinding hash and sealed per-hop payloads.

Scalars are plain ``int`` values reduced mod :data:`ORDER`; points are
``ecdsa`` Jacobian points on NIST P-224 (secp224r1).  Everything that
hashes or counts bytes goes through :func:`encode_scalar` and
:func:`encode_point`, so those two layouts are the wire contract.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from ecdsa import NIST224p
from ecdsa.ellipticcurve import INFINITY, PointJacobi

CURVE = NIST224p
ORDER: int = int(NIST224p.order)
G: PointJacobi = NIST224p.generator
IDENTITY = INFINITY

SCALAR_BYTES = 32
POINT_BYTES = 1 + NIST224p.baselen  # compressed
IDENTITY_BYTES = b"\x00"

MAX_PAYLOAD = 1 << 24
_NONCE = bytes(12)
_TAG_BYTES = 16


class AuthFailure(Exception):
    """A sealed blob failed authentication (tampered or wrong key)."""


class DecodeError(ValueError):
    pass


def random_scalar(rng: random.Random) -> int:
    """Uniform nonzero scalar drawn from ``rng``."""
    while True:
        k = rng.randrange(ORDER)
        if k:
            return k


def base_mul(k: int) -> PointJacobi:
    k %= ORDER
    if k == 0:
        return IDENTITY
    return G * k


def mul(point, k: int):
    k %= ORDER
    if k == 0 or point == IDENTITY:
        return IDENTITY
    return point * k


def neg(point):
    if point == IDENTITY:
        return IDENTITY
    return -point


def is_identity(point) -> bool:
    return point == IDENTITY


def points_equal(a, b) -> bool:
    # ecdsa compares INFINITY by identity; normalise both sides first
    if is_identity(a) or is_identity(b):
        return is_identity(a) and is_identity(b)
    return a == b


def encode_scalar(k: int) -> bytes:
    return (k % ORDER).to_bytes(SCALAR_BYTES, "big")


def decode_scalar(data: bytes) -> int:
    if len(data) != SCALAR_BYTES:
        raise DecodeError(f"scalar must be {SCALAR_BYTES} bytes, got {len(data)}")
    k = int.from_bytes(data, "big")
    if k >= ORDER:
        raise DecodeError("scalar out of range")
    return k


def encode_point(point) -> bytes:
    if is_identity(point):
        return IDENTITY_BYTES
    return point.to_bytes("compressed")


def decode_point(data: bytes):
    if data == IDENTITY_BYTES:
        return IDENTITY
    if len(data) != POINT_BYTES:
        raise DecodeError(f"point must be {POINT_BYTES} bytes, got {len(data)}")
    try:
        return PointJacobi.from_bytes(NIST224p.curve, data, valid_encodings=("compressed",),
                                      order=ORDER, generator=False)
    except Exception as exc:  # ecdsa raises several error types for bad encodings
        raise DecodeError(str(exc)) from exc


def channel_id_bytes(channel_id: int) -> bytes:
    return channel_id.to_bytes(8, "big")


def hash_to_scalar(secret: int, channel_id: int) -> int:
    """Blinding factor ``H(secret || channel id)`` reduced mod the group order."""
    digest = hashlib.sha256(encode_scalar(secret) + channel_id_bytes(channel_id)).digest()
    return int.from_bytes(digest, "big") % ORDER


@dataclass(frozen=True)
class HopKeyPair:
    secret: int
    public: PointJacobi

    @classmethod
    def generate(cls, rng: random.Random) -> "HopKeyPair":
        sk = random_scalar(rng)
        return cls(sk, base_mul(sk))


@dataclass(frozen=True)
class SealedBlob:
    ephemeral: bytes
    ciphertext: bytes  # includes the AEAD tag

    def to_bytes(self) -> bytes:
        return self.ephemeral + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        if len(data) < POINT_BYTES + _TAG_BYTES:
            raise DecodeError("sealed blob too short")
        return cls(data[:POINT_BYTES], data[POINT_BYTES:])

    def __len__(self) -> int:
        return len(self.ephemeral) + len(self.ciphertext)


def sealed_size(payload_len: int) -> int:
    return POINT_BYTES + payload_len + _TAG_BYTES


def _derive_key(shared, ephemeral: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None,
                info=b"cryptomaze-hop" + ephemeral).derive(encode_point(shared))


def seal(recipient_pub, payload: bytes, rng: random.Random) -> SealedBlob:
    """Encrypt ``payload`` so that only the holder of ``recipient_pub``'s secret can read it."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    eph = random_scalar(rng)
    eph_bytes = encode_point(base_mul(eph))
    key = _derive_key(mul(recipient_pub, eph), eph_bytes)
    # fresh key per blob, so a fixed nonce is safe
    return SealedBlob(eph_bytes, ChaCha20Poly1305(key).encrypt(_NONCE, payload, eph_bytes))


def unseal(recipient_secret: int, blob: SealedBlob) -> bytes:
    try:
        eph_point = decode_point(blob.ephemeral)
    except DecodeError as exc:
        raise AuthFailure("bad ephemeral key") from exc
    if is_identity(eph_point):
        raise AuthFailure("bad ephemeral key")
    key = _derive_key(mul(eph_point, recipient_secret), blob.ephemeral)
    try:
        return ChaCha20Poly1305(key).decrypt(_NONCE, blob.ciphertext, blob.ephemeral)
    except InvalidTag as exc:
        raise AuthFailure("authentication failed") from exc
