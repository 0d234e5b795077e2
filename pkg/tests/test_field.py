import random

import pytest
from hypothesis import given, strategies as st

from mpcevm.field import (DEFAULT_PRIME, DuplicateAbscissa, FieldError, InputOutOfRange, InverseOfZero,
                          Polynomial, PrimeField, lagrange_coefficients, lagrange_interpolate,
                          poly_eval, random_polynomial)

P = DEFAULT_PRIME
elems = st.integers(min_value=0, max_value=P - 1)
nonzero = st.integers(min_value=1, max_value=P - 1)
F = PrimeField()


@given(elems, elems, elems)
def test_ring_axioms(a, b, c):
    assert F.add(a, b) == F.add(b, a)
    assert F.mul(a, b) == F.mul(b, a)
    assert F.mul(a, F.add(b, c)) == F.add(F.mul(a, b), F.mul(a, c))
    assert F.add(F.add(a, b), c) == F.add(a, F.add(b, c))
    assert F.add(a, F.neg(a)) == 0
    assert F.sub(F.add(a, b), b) == a


@given(nonzero)
def test_inverse(a):
    assert F.mul(a, F.inv(a)) == 1


def test_inverse_of_zero():
    with pytest.raises(InverseOfZero):
        F.inv(0)


def test_small_prime_examples():
    small = PrimeField(97)
    assert small.mul(50, 2) == 3
    assert small.arith("inv", 3) == 65
    assert lagrange_interpolate([(1, 3), (2, 5)], 0, small) == 1


def test_arith_dispatch_rejects_unknown_op():
    with pytest.raises(FieldError):
        F.arith("pow", 2, 3)
    with pytest.raises(FieldError):
        F.arith("add", 2)


def test_sqrt_roundtrip():
    for a in (0, 1, 4, 123456789):
        s = F.sqrt(F.mul(a, a))
        assert F.mul(s, s) == F.mul(a, a)


def test_check_input_range():
    assert F.check_input(2**32 - 1, 32) == 2**32 - 1
    with pytest.raises(InputOutOfRange):
        F.check_input(2**32, 32)
    with pytest.raises(InputOutOfRange):
        F.check_input(-1, 32)


def test_polynomial_normalizes_trailing_zeros():
    f = Polynomial((5, 0, 0), F)
    assert f.degree == 0 and f(123) == 5


@given(st.integers(0, 6), elems, st.integers(0, 2**32))
def test_lagrange_any_subset_recovers(deg, secret, seed):
    rng = random.Random(seed)
    f = random_polynomial(secret, deg, rng, F)
    xs = rng.sample(range(1, 40), deg + 1)
    assert lagrange_interpolate([(x, poly_eval(f, x)) for x in xs], 0, F) == secret


@given(st.lists(st.integers(1, 50), min_size=1, max_size=8, unique=True), elems)
def test_lagrange_weights_sum_to_one(xs, at):
    # interpolating the constant 1 gives 1 everywhere
    assert sum(lagrange_coefficients(xs, at, F)) % P == 1


def test_duplicate_abscissa():
    with pytest.raises(DuplicateAbscissa):
        lagrange_coefficients([1, 2, 1], 0, F)
