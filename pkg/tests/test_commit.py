import random

from hypothesis import given, strategies as st

from mpcevm import commit as cm
from mpcevm.field import DEFAULT_PRIME, PrimeField, poly_eval, random_polynomial

P = DEFAULT_PRIME
PARAMS = cm.default_params()
elems = st.integers(min_value=0, max_value=P - 1)


def test_params_shape():
    assert PARAMS.order == P
    assert (PARAMS.modulus - 1) % P == 0
    assert pow(PARAMS.g, P, PARAMS.modulus) == 1 and PARAMS.g != 1
    assert pow(PARAMS.h, P, PARAMS.modulus) == 1 and PARAMS.h != 1
    assert PARAMS.g != PARAMS.h


def test_identity_commitment():
    assert cm.commit(0, 0, PARAMS) == PARAMS.identity


@given(elems, elems, elems, elems)
def test_homomorphism(m1, r1, m2, r2):
    lhs = cm.combine(cm.commit(m1, r1, PARAMS), cm.commit(m2, r2, PARAMS), PARAMS)
    assert lhs == cm.commit((m1 + m2) % P, (r1 + r2) % P, PARAMS)


@given(elems, elems, elems)
def test_scaling(m, r, k):
    assert cm.scale(cm.commit(m, r, PARAMS), k, PARAMS) == cm.commit(m * k % P, r * k % P, PARAMS)


@given(elems, elems)
def test_opening(m, r):
    c = cm.commit(m, r, PARAMS)
    assert cm.verify_opening(c, m, r, PARAMS)
    assert not cm.verify_opening(c, (m + 1) % P, r, PARAMS)


def _vector(t, n, seed, tamper=None):
    rng = random.Random(seed)
    F = PrimeField()
    fa, fr = random_polynomial(rng.randrange(P), t, rng, F), random_polynomial(rng.randrange(P), t, rng, F)
    vals = [(poly_eval(fa, i), poly_eval(fr, i)) for i in range(1, n + 1)]
    if tamper is not None:
        a, r = vals[tamper]
        vals[tamper] = ((a + 1) % P, r)
    return tuple(cm.commit(a, r, PARAMS) for a, r in vals)


@given(st.integers(0, 3), st.integers(0, 2**32))
def test_commitment_interpolation(t, seed):
    n = 3 * t + 1
    cs = _vector(t, n, seed)
    base = [(i + 1, cs[i]) for i in range(t + 1)]
    for j in range(n):
        assert cm.commitment_interpolate(base, j + 1, PARAMS) == cs[j]


@given(st.integers(1, 3), st.integers(0, 2**32), st.data())
def test_degree_check_agrees_with_exact(t, seed, data):
    n = 3 * t + 1
    tamper = data.draw(st.none() | st.integers(0, n - 1))
    cs = _vector(t, n, seed, tamper)
    fast, exact = cm.is_low_degree(cs, t, PARAMS), cm.is_low_degree_exact(cs, t, PARAMS)
    assert fast == exact == (tamper is None)


def test_degree_check_short_vector_trivially_true():
    assert cm.is_low_degree((5, 7), 1, PARAMS)
