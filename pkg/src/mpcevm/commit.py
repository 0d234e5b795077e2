"""Pedersen commitments in the order-``p`` subgroup of ``Z_P^*`` with ``P = m*p + 1``.

The subgroup order equals the secret-sharing field prime, so exponent arithmetic
and field arithmetic agree exactly and commitments are homomorphic over the field.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import gmpy2

from .field import DEFAULT_PRIME, PrimeField, lagrange_coefficients

# Precomputed for DEFAULT_PRIME: smallest even m >= 2**66 with m*p + 1 prime (128-bit P).
_DEFAULT_COFACTOR = 73786976294838206548


class UnknownCommitmentReference(LookupError):
    pass


Commitment = int


@dataclass(frozen=True)
class CommitmentParams:
    modulus: int  # P
    order: int  # q == field prime
    g: int
    h: int

    @property
    def identity(self) -> Commitment:
        return 1


def _hash_to_subgroup(label: str, modulus: int, cofactor: int) -> int:
    counter = 0
    while True:
        digest = hashlib.sha256(f"{label}/{counter}".encode()).digest()
        x = int.from_bytes(digest * 2, "big") % modulus
        y = int(gmpy2.powmod(x, cofactor, modulus))
        if y not in (0, 1):
            return y
        counter += 1


def _find_cofactor(p: int, bits: int = 128) -> int:
    m = 1 << max(2, bits - p.bit_length())
    m += m % 2
    while not gmpy2.is_prime(m * p + 1, 40):
        m += 2
    return m


@lru_cache(maxsize=None)
def default_params(p: int = DEFAULT_PRIME) -> CommitmentParams:
    """Nothing-up-my-sleeve parameters for field prime ``p``."""
    cofactor = _DEFAULT_COFACTOR if p == DEFAULT_PRIME else _find_cofactor(p)
    modulus = cofactor * p + 1
    g = _hash_to_subgroup("mpcevm/pedersen/g", modulus, cofactor)
    h = _hash_to_subgroup("mpcevm/pedersen/h", modulus, cofactor)
    return CommitmentParams(modulus=modulus, order=p, g=g, h=h)


def commit(m: int, r: int, params: CommitmentParams) -> Commitment:
    P, q = params.modulus, params.order
    return int(gmpy2.powmod(params.g, m % q, P) * gmpy2.powmod(params.h, r % q, P) % P)


def combine(c1: Commitment, c2: Commitment, params: CommitmentParams) -> Commitment:
    return c1 * c2 % params.modulus


def scale(c: Commitment, k: int, params: CommitmentParams) -> Commitment:
    """``commit(m, r) -> commit(k*m, k*r)`` for a public constant ``k``."""
    return int(gmpy2.powmod(c, k % params.order, params.modulus))


def linear_combination(pairs: Sequence[tuple], params: CommitmentParams) -> Commitment:
    """Product of ``c_i ** w_i``: commitment to the weighted sum of openings."""
    P, q = params.modulus, params.order
    acc = gmpy2.mpz(1)
    for w, c in pairs:
        w %= q
        if w == 0:
            continue
        acc = acc * (c if w == 1 else gmpy2.powmod(c, w, P)) % P
    return int(acc)


def commitment_interpolate(cs: Sequence[tuple], at: int, params: CommitmentParams) -> Commitment:
    """Interpolate commitments ``(index, C_index)`` at ``at`` in the exponent."""
    field = PrimeField(params.order)
    xs = [i for i, _ in cs]
    ws = lagrange_coefficients(xs, at, field)
    return linear_combination([(w, c) for w, (_, c) in zip(ws, cs)], params)


def verify_opening(c: Commitment, m: int, r: int, params: CommitmentParams) -> bool:
    return commit(m, r, params) == c


@lru_cache(maxsize=65536)
def is_low_degree(commitments: tuple, t: int, params: CommitmentParams) -> bool:
    """True iff commitments at x = 1..n lie on a degree <= t polynomial in the exponent.

    Checks one dual-code word whose coefficients are derived from a hash of the
    vector itself, so all parties run the same test and a vector cannot be built
    to dodge it without breaking the hash.  A wrong answer has probability ~n/p.
    """
    n = len(commitments)
    if n <= t + 1:
        return True
    q = params.order
    seed = hashlib.sha256(repr((commitments, t)).encode()).digest()
    # dual word: y_i = u_i * r(i), u_i = 1 / prod_{j != i} (i - j), deg r <= n - t - 2
    r = [int.from_bytes(hashlib.sha256(seed + bytes([k])).digest(), "big") % q
         for k in range(n - t - 1)]
    pairs = []
    for i, u in enumerate(_dual_weights(n, q), start=1):
        ri = 0
        for coef in reversed(r):
            ri = (ri * i + coef) % q
        pairs.append((ri * u % q, commitments[i - 1]))
    return linear_combination(pairs, params) == 1


@lru_cache(maxsize=None)
def _dual_weights(n: int, q: int) -> tuple:
    out = []
    for i in range(1, n + 1):
        den = 1
        for j in range(1, n + 1):
            if j != i:
                den = den * (i - j) % q
        out.append(pow(den, q - 2, q))
    return tuple(out)


def is_low_degree_exact(commitments: tuple, t: int, params: CommitmentParams) -> bool:
    """Reference test: interpolate from the first t+1 points and compare the rest."""
    n = len(commitments)
    if n <= t + 1:
        return True
    base = [(i + 1, commitments[i]) for i in range(t + 1)]
    return all(commitment_interpolate(base, j + 1, params) == commitments[j]
               for j in range(t + 1, n))
