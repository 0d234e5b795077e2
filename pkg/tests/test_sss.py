import random
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from mpcevm import commit as cm
from mpcevm import sss
from mpcevm.field import DEFAULT_PRIME, PrimeField

P = DEFAULT_PRIME
F = PrimeField()
PARAMS = cm.default_params()
elems = st.integers(min_value=0, max_value=P - 1)


@given(elems, st.integers(0, 3), st.integers(0, 2**32))
def test_deal_and_reconstruct(secret, t, seed):
    n = 3 * t + 1
    d = sss.deal(secret, t, n, random.Random(seed), F, PARAMS)
    assert len(d.shares) == n and len(d.commitments) == n
    assert all(sss.verify_share(d.commitments, s, PARAMS) for s in d.shares)
    assert cm.is_low_degree(d.commitments, t, PARAMS)
    assert sss.reconstruct(d.shares, d.commitments, t, F, PARAMS) == secret


def test_single_party_committee():
    d = sss.deal(42, 0, 1, random.Random(0), F, PARAMS)
    assert d.shares[0].value == 42
    assert sss.reconstruct(d.shares, d.commitments, 0, F, PARAMS) == 42


def test_committee_too_small():
    with pytest.raises(sss.PartyCountTooSmall):
        sss.deal(1, 2, 6, random.Random(0), F, PARAMS)


def test_reconstruct_ignores_corrupted_shares():
    t, n = 3, 10
    d = sss.deal(777, t, n, random.Random(5), F, PARAMS)
    shares = list(d.shares)
    for k in (0, 4, 9):
        shares[k] = replace(shares[k], value=(shares[k].value + 1) % P)
    assert sss.reconstruct(shares, d.commitments, t, F, PARAMS) == 777


def test_too_few_valid_shares():
    t, n = 1, 4
    d = sss.deal(9, t, n, random.Random(1), F, PARAMS)
    shares = [replace(s, value=s.value + 1) for s in d.shares[:3]] + [d.shares[3]]
    with pytest.raises(sss.InsufficientValidShares):
        sss.reconstruct(shares, d.commitments, t, F, PARAMS)


def test_dealing_is_seed_deterministic():
    a = sss.deal(5, 1, 4, random.Random("x"), F, PARAMS)
    b = sss.deal(5, 1, 4, random.Random("x"), F, PARAMS)
    assert a == b


@given(elems, elems, st.integers(0, 2**32))
def test_shares_are_linear(x, y, seed):
    rng = random.Random(seed)
    t, n = 1, 4
    dx, dy = sss.deal(x, t, n, rng, F, PARAMS), sss.deal(y, t, n, rng, F, PARAMS)
    summed = [sss.Share(i + 1, (a.value + b.value) % P, (a.randomness_value + b.randomness_value) % P)
              for i, (a, b) in enumerate(zip(dx.shares, dy.shares))]
    cs = [cm.combine(a, b, PARAMS) for a, b in zip(dx.commitments, dy.commitments)]
    assert sss.reconstruct(summed, cs, t, F, PARAMS) == (x + y) % P


def test_disputes():
    d = sss.deal(3, 1, 4, random.Random(2), F, PARAMS)
    commitments = {"deal-0": d.commitments}
    s = d.share_for(2)
    ok = sss.DisputeRecord(0, "deal-0", 2, (s.value, s.randomness_value))
    bad = sss.DisputeRecord(0, "deal-0", 2, (s.value + 1, s.randomness_value))
    silent = sss.DisputeRecord(0, "deal-0", 2)
    assert sss.open_dispute(ok, commitments, PARAMS) is sss.DisputeVerdict.VALID
    assert sss.open_dispute(bad, commitments, PARAMS) is sss.DisputeVerdict.CHEATER
    assert sss.open_dispute(silent, commitments, PARAMS) is sss.DisputeVerdict.CHEATER
    with pytest.raises(cm.UnknownCommitmentReference):
        sss.open_dispute(sss.DisputeRecord(0, "nope", 2, (1, 1)), commitments, PARAMS)
