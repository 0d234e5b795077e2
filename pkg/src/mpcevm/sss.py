"""Verifiable Shamir sharing: dealing, per-share verification, robust reconstruction
and dispute evaluation.  Party indices are 1-based x-coordinates."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from . import commit as cm
from .field import PrimeField, lagrange_interpolate, random_polynomial, poly_eval


class PartyCountTooSmall(ValueError):
    pass


class InsufficientValidShares(ValueError):
    pass


@dataclass(frozen=True)
class Share:
    party_index: int
    value: int
    randomness_value: int


@dataclass(frozen=True)
class Dealing:
    shares: tuple
    commitments: tuple
    threshold: int
    party_count: int

    def share_for(self, party_index: int) -> Share:
        return self.shares[party_index - 1]


class DisputeVerdict(enum.Enum):
    VALID = "VALID"
    CHEATER = "CHEATER"


NO_RESPONSE = None


@dataclass(frozen=True)
class DisputeRecord:
    accused_party: int
    dealing_id: object
    disputing_party: int
    opened_values: Optional[tuple] = NO_RESPONSE


def check_committee(t: int, n: int) -> None:
    if t < 0 or n < 3 * t + 1:
        raise PartyCountTooSmall(f"need n >= 3t+1, got n={n}, t={t}")


def deal(secret: int, t: int, n: int, rng: random.Random, field: PrimeField,
         params: cm.CommitmentParams) -> Dealing:
    check_committee(t, n)
    f_a = random_polynomial(secret, t, rng, field)
    f_r = random_polynomial(field.random(rng), t, rng, field)
    shares = []
    commitments = []
    for i in range(1, n + 1):
        a_i, r_i = poly_eval(f_a, i), poly_eval(f_r, i)
        shares.append(Share(i, a_i, r_i))
        commitments.append(cm.commit(a_i, r_i, params))
    return Dealing(tuple(shares), tuple(commitments), t, n)


def verify_share(commitments: Sequence[int], share: Share, params: cm.CommitmentParams) -> bool:
    if not 1 <= share.party_index <= len(commitments):
        return False
    return cm.verify_opening(commitments[share.party_index - 1], share.value,
                             share.randomness_value, params)


def reconstruct(shares: Sequence[Share], commitments: Sequence[int], t: int,
                field: PrimeField, params: cm.CommitmentParams) -> int:
    """Interpolate at 0 from the shares that open their commitments.

    Shares failing verification are discarded; fewer than ``t + 1`` survivors is an error.
    """
    valid = {}
    for s in shares:
        if s.party_index not in valid and verify_share(commitments, s, params):
            valid[s.party_index] = s
    if len(valid) < t + 1:
        raise InsufficientValidShares(f"{len(valid)} valid shares, need {t + 1}")
    chosen = sorted(valid)[: t + 1]
    return lagrange_interpolate([(i, valid[i].value) for i in chosen], 0, field)


def open_dispute(record: DisputeRecord, commitments: Mapping, params: cm.CommitmentParams) -> DisputeVerdict:
    try:
        vector = commitments[record.dealing_id]
        c = vector[record.disputing_party - 1]
    except (KeyError, IndexError):
        raise cm.UnknownCommitmentReference(record.dealing_id) from None
    if record.opened_values is NO_RESPONSE:
        return DisputeVerdict.CHEATER
    m, r = record.opened_values
    return DisputeVerdict.VALID if cm.verify_opening(c, m, r, params) else DisputeVerdict.CHEATER
