"""Prime-field arithmetic and polynomial helpers used by the secret-sharing layers.

Field elements are plain Python ints in ``[0, p)``; a :class:`PrimeField`
instance carries the modulus.  Polynomials store coefficients low degree first.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

# 2**61 - 1 is a Mersenne prime; 2**61 - 1 = 3 (mod 4) so square roots are one pow.
DEFAULT_PRIME = (1 << 61) - 1
DEFAULT_BIT_WIDTH = 32


class FieldError(ValueError):
    pass


class InverseOfZero(FieldError):
    pass


class DuplicateAbscissa(FieldError):
    pass


class InputOutOfRange(FieldError):
    pass


FieldElement = int


class PrimeField:
    """Arithmetic modulo a fixed prime ``p``."""

    def __init__(self, p: int = DEFAULT_PRIME):
        if p < 3:
            raise FieldError("modulus must be an odd prime")
        self.p = p

    def __repr__(self):
        return f"PrimeField({self.p})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self):
        return hash(("PrimeField", self.p))

    def __call__(self, x: int) -> FieldElement:
        return x % self.p

    def add(self, a, b):
        return (a + b) % self.p

    def sub(self, a, b):
        return (a - b) % self.p

    def mul(self, a, b):
        return (a * b) % self.p

    def neg(self, a):
        return (-a) % self.p

    def inv(self, a):
        a %= self.p
        if a == 0:
            raise InverseOfZero("inverse of zero requested")
        return pow(a, self.p - 2, self.p)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def arith(self, op: str, a: FieldElement, b: FieldElement | None = None) -> FieldElement:
        """Dispatch by name: ``add``, ``sub``, ``mul``, ``inv`` or ``neg``."""
        if op in ("inv", "neg"):
            return getattr(self, op)(a)
        if op not in ("add", "sub", "mul"):
            raise FieldError(f"unknown field operation {op!r}")
        if b is None:
            raise FieldError(f"{op} needs two operands")
        return getattr(self, op)(a, b)

    def sqrt(self, a):
        """A square root of ``a`` (the smaller representative), or None."""
        a %= self.p
        if a == 0:
            return 0
        if self.p % 4 != 3:
            raise FieldError("sqrt implemented only for p = 3 mod 4")
        s = pow(a, (self.p + 1) // 4, self.p)
        if s * s % self.p != a:
            return None
        return min(s, self.p - s)

    def random(self, rng: random.Random) -> FieldElement:
        return rng.randrange(self.p)

    def check_input(self, value: int, bit_width: int) -> FieldElement:
        if not 0 <= value < (1 << bit_width):
            raise InputOutOfRange(f"input {value} outside [0, 2^{bit_width})")
        return value


@dataclass(frozen=True)
class Polynomial:
    """Polynomial over a prime field; ``coefficients[0]`` is the constant term."""

    coefficients: tuple
    field: PrimeField

    def __post_init__(self):
        coeffs = [c % self.field.p for c in self.coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        if not coeffs:
            coeffs = [0]
        object.__setattr__(self, "coefficients", tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return poly_eval(self, x)


def poly_eval(f: Polynomial, x: FieldElement) -> FieldElement:
    p = f.field.p
    acc = 0
    for c in reversed(f.coefficients):
        acc = (acc * x + c) % p
    return acc


def random_polynomial(secret: FieldElement, degree: int, rng: random.Random,
                      field: PrimeField) -> Polynomial:
    if degree < 0:
        raise FieldError("degree must be non-negative")
    coeffs = [secret % field.p] + [rng.randrange(field.p) for _ in range(degree)]
    return Polynomial(tuple(coeffs), field)


def lagrange_coefficients(xs: Sequence[FieldElement], at: FieldElement,
                          field: PrimeField) -> list:
    """Weights ``w_i`` with ``sum(w_i * f(x_i)) == f(at)`` for deg f < len(xs)."""
    p = field.p
    return list(_lagrange_weights(tuple(x % p for x in xs), at % p, p))


@lru_cache(maxsize=4096)
def _lagrange_weights(xs: tuple, at: int, p: int) -> tuple:
    if len(set(xs)) != len(xs):
        raise DuplicateAbscissa(f"abscissae not distinct: {list(xs)}")
    weights = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if i == j:
                continue
            num = num * (at - xj) % p
            den = den * (xi - xj) % p
        weights.append(num * pow(den, p - 2, p) % p)
    return tuple(weights)


def lagrange_interpolate(points: Iterable[tuple], at: FieldElement,
                         field: PrimeField) -> FieldElement:
    points = list(points)
    if not points:
        raise FieldError("need at least one point")
    xs = [x for x, _ in points]
    ws = lagrange_coefficients(xs, at, field)
    return sum(w * y for w, (_, y) in zip(ws, points)) % field.p
