"""ECDSA-based scriptless lock held by a trusted dealer.

A channel session gets one shared key.  ``lock`` produces a pre-signature
whose nonce point is ``k * R_cond``; dividing ``s`` by the discrete log of
``R_cond`` turns it into an ordinary ECDSA signature on the message.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .group import ORDER, base_mul, is_identity, mul, random_scalar


class LockError(Exception):
    pass


class DuplicateSession(LockError):
    pass


class NoKey(LockError):
    pass


class AlreadyLocked(LockError):
    pass


class NotLocked(LockError):
    pass


class DegenerateCondition(LockError):
    pass


def message_hash(m: bytes) -> int:
    """SHA-256 truncated to the order's bit length, as ECDSA does."""
    digest = int.from_bytes(hashlib.sha256(m).digest(), "big")
    return digest >> max(0, 256 - ORDER.bit_length())


@dataclass(frozen=True)
class SharedKey:
    session: object
    pk: object


@dataclass(frozen=True)
class PreSignature:
    r_x: int
    s: int
    condition: object


class EcdsaLockFunctionality:
    """KeyGen / Lock / Verify for many channel sessions."""

    def __init__(self, rng: random.Random):
        self._rng = rng
        self._sk: dict = {}
        self._locked: set = set()

    def keygen(self, session, u_i=None, u_j=None) -> SharedKey:
        if session in self._sk:
            raise DuplicateSession(f"session {session!r} already has a key")
        sk = random_scalar(self._rng)
        self._sk[session] = sk
        return SharedKey(session, base_mul(sk))

    def lock(self, session, m: bytes, condition) -> PreSignature:
        if session not in self._sk:
            raise NoKey(f"no key for session {session!r}")
        if session in self._locked:
            raise AlreadyLocked(f"session {session!r} is already locked")
        if is_identity(condition):
            raise DegenerateCondition("condition is the identity point")
        sk = self._sk[session]
        h = message_hash(m)
        while True:
            k = random_scalar(self._rng)
            nonce_point = mul(condition, k)
            r_x = int(nonce_point.x()) % ORDER
            if r_x == 0:
                continue
            s = pow(k, -1, ORDER) * (h + r_x * sk) % ORDER
            if s:
                break
        self._locked.add(session)
        return PreSignature(r_x, s, condition)

    def verify(self, session, m: bytes, r_released: int, presig: PreSignature, pk) -> bool:
        if session not in self._locked:
            raise NotLocked(f"session {session!r} has no lock")
        r_released %= ORDER
        if r_released == 0:
            return False
        s_done = presig.s * pow(r_released, -1, ORDER) % ORDER
        w = pow(s_done, -1, ORDER)
        point = base_mul(message_hash(m) * w) + mul(pk, presig.r_x * w)
        if is_identity(point):
            return False
        return int(point.x()) % ORDER == presig.r_x


def complete_signature(presig: PreSignature, r_released: int) -> tuple[int, int]:
    """ECDSA signature ``(r, s)`` obtained from the pre-signature and the opening."""
    return presig.r_x, presig.s * pow(r_released % ORDER, -1, ORDER) % ORDER
