"""Per-node contract checks used while forwarding and releasing."""

from __future__ import annotations

from dataclasses import dataclass

from .group import ORDER, base_mul, hash_to_scalar, points_equal


@dataclass(frozen=True)
class OutgoingTerms:
    """One successor entry a node finds in its decrypted payload."""

    channel_id: int
    x_adj: int
    condition: object
    timeout: int


def node_secret(terms: list[OutgoingTerms]) -> int:
    return sum(t.x_adj for t in terms) % ORDER


def check_forward(terms: list[OutgoingTerms], t_in: int, r_in, id_in: int, delta_chain: int) -> bool:
    """Does the incoming contract ``(r_in, t_in)`` on ``id_in`` cover every outgoing one?

    With one successor the incoming condition must equal ``e*x*G + R_out``;
    with several, ``e*x*G + R_out + x_out*G`` for each of them.  Every
    outgoing timeout must leave at least ``delta_chain`` before ``t_in``.
    """
    if not terms:
        return False
    x = node_secret(terms)
    blind = base_mul(hash_to_scalar(x, id_in) * x)
    split = len(terms) > 1
    for t in terms:
        expected = blind + t.condition
        if split:
            expected = expected + base_mul(t.x_adj)
        if not points_equal(r_in, expected) or t_in < t.timeout + delta_chain:
            return False
    return True


def compute_release(r_next: int, x: int, id_in: int) -> int:
    """Opening of the incoming condition from the successor's opening."""
    return (hash_to_scalar(x, id_in) * x + r_next) % ORDER
