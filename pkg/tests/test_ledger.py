from hypothesis import given, strategies as st

from mpcevm import circuit as C
from mpcevm import fixtures
from mpcevm.ledger import (CreateTx, Ledger, RegularTx, UnknownSavedState, contract_address, eoa_address,
                           tx_hash)
from mpcevm.txmgr import Status

import pytest

ALICE, BOB = eoa_address("alice"), eoa_address("bob")
COMMITTEE = tuple(eoa_address(f"p{i}") for i in range(4))


def _ledger():
    reg = C.CircuitRegistry()
    cid = reg.register(C.build_probe_circuit(4))
    L = Ledger(reg, fixtures=fixtures.load_all())
    L.default_committee, L.default_t = COMMITTEE, 1
    for a in (ALICE, BOB) + COMMITTEE:
        L.fund(a, 10**9)
    return L, cid


def _nonce(L, who):
    return L.accounts[who].nonce


def _deploy_probe(L, cid):
    tx = CreateTx(ALICE, _nonce(L, ALICE), "MPCProbe", (COMMITTEE, cid))
    (r,), _ = L.commit_block([tx])
    assert r.status == "success"
    return contract_address(ALICE, tx.nonce)


def _call(L, who, target, method=None, args=(), value=0):
    tx = RegularTx(who, _nonce(L, who), target, method, tuple(args), value)
    (r,), events = L.commit_block([tx])
    return tx, r, events


def test_empty_block_advances_height_only():
    L, _ = _ledger()
    digest = L.account_digest()
    L.commit_block([])
    assert L.height == 1 and L.account_digest() == digest


@given(st.lists(st.tuples(st.sampled_from([ALICE, BOB]), st.integers(0, 10**9 + 10)), max_size=25))
def test_value_is_conserved(transfers):
    L, _ = _ledger()
    total = L.total_balance()
    for who, amount in transfers:
        other = BOB if who == ALICE else ALICE
        L.commit_block([RegularTx(who, _nonce(L, who), other, None, (), amount, gas_limit=100)])
        assert L.total_balance() == total
        assert all(a.balance >= 0 for a in L.accounts.values())


def test_bad_nonce_rejected():
    L, _ = _ledger()
    (r,), _ = L.commit_block([RegularTx(ALICE, 5, BOB, None, (), 1)])
    assert r.status == "rejected" and r.cause == "BadNonce"


def test_token_transfer():
    L, _ = _ledger()
    tx = CreateTx(ALICE, 0, "Token", (1000,))
    L.commit_block([tx])
    token = contract_address(ALICE, 0)
    _, r, _ = _call(L, ALICE, token, "transfer", (BOB, 250))
    assert r.status == "success"
    assert L.storage(token, ("bal", BOB)) == 250 and L.storage(token, ("bal", ALICE)) == 750
    _, r, _ = _call(L, BOB, token, "transfer", (ALICE, 251))
    assert r.status == "reverted"


def test_lock_lifecycle():
    L, cid = _ledger()
    probe = _deploy_probe(L, cid)
    tx, r, events = _call(L, ALICE, probe, "run", ((4,),))
    session = tx_hash(tx)
    assert r.status == "suspended" and probe in L.locks()
    assert ("start", session, 0) in events
    # a second call while the session is live is denied, and so is a plain payment
    _, r2, _ = _call(L, BOB, probe, "run", ((4,),))
    assert r2.status == "reverted" and r2.cause == "AccessViolation" and "locked" in r2.detail
    _, r3, _ = _call(L, BOB, probe, None, (), 5)
    assert r3.cause == "AccessViolation"
    before = L.state_hash()
    assert L.mpc_finish(session, 0, (21, 0, 0, 0)) == "success"
    assert L.state_hash() != before
    assert probe not in L.locks()
    assert L.storage(probe, "lastResult") == (21, 0, 0, 0)
    assert L.txmgr.sessions[session].status is Status.FINISHED
    assert L.session_outcomes[session]["outcome"] == "success"
    with pytest.raises(UnknownSavedState):
        L.mpc_finish(session, 0, (21, 0, 0, 0))


def test_revert_after_mpc_releases_lock_and_refunds_value():
    L, cid = _ledger()
    probe = _deploy_probe(L, cid)
    tx, r, _ = _call(L, ALICE, probe, "runThenFail", ((4,),), value=0)
    assert r.status == "suspended"
    assert L.mpc_finish(tx_hash(tx), 0, (1, 0, 0, 0)) == "reverted_at_resume"
    assert probe not in L.locks()
    assert L.storage(probe, "lastResult") == 0


def test_reinvocation_and_stale_finish():
    L, cid = _ledger()
    probe = _deploy_probe(L, cid)
    tx, r, _ = _call(L, ALICE, probe, "runTwice", ((4,),))
    h = tx_hash(tx)
    assert L.mpc_finish(h, 0, (5, 0, 0, 0)) == "suspended"
    assert L.txmgr.sessions[h].invocation_count == 1
    assert L.mpc_finish(h, 0, (6, 0, 0, 0)) == "stale"
    assert L.mpc_finish(h, 1, (7, 1, 0, 0)) == "success"
    assert L.storage(probe, "first") == (5, 0, 0, 0) and L.storage(probe, "second") == (7, 1, 0, 0)


def test_mpc_tx_pays_full_gas_limit():
    L, cid = _ledger()
    probe = _deploy_probe(L, cid)
    tx, r, _ = _call(L, ALICE, probe, "run", ((4,),))
    assert r.gas_used == tx.gas_limit
