import pytest
from hypothesis import given, strategies as st

from mpcevm import circuit as C
from mpcevm.engine.messages import Kind, MpcMessage
from mpcevm.txmgr import MultGateQueue, NotCommitteeMember, NotEOA, Status, TxManager

PARTIES = tuple(f"p{i}" for i in range(4))


def _mgr(cap=4):
    reg = C.CircuitRegistry()
    cid = reg.register(C.build_mult_circuit())
    finished = []
    mgr = TxManager(reg, cap, finish_hook=lambda h, i, r: finished.append((h, i, r)))
    info = mgr.enter_mpc("c", "s", cid, (), PARTIES, 1)
    return mgr, info, finished


def _msg(kind, sender, *payload, inv=0):
    return MpcMessage("s", inv, kind, sender, payload)


def test_ready_needs_2t_plus_1():
    mgr, info, _ = _mgr()
    mgr.route("p0", _msg(Kind.READY, 0, 5))
    mgr.route("p1", _msg(Kind.READY, 1, 5))
    mgr.route("p1", _msg(Kind.READY, 1, 5))  # duplicate vote ignored
    assert not mgr.queue.running
    mgr.route("p2", _msg(Kind.READY, 2, 5))
    assert mgr.queue.running == [("s", 0, 5)]
    assert ("approve", "s", 0, 5, (0, 1, 2)) in mgr.events


def test_gate_done_retires():
    mgr, info, _ = _mgr()
    for i in range(3):
        mgr.route(PARTIES[i], _msg(Kind.READY, i, 5))
    for i in range(3):
        mgr.route(PARTIES[i], _msg(Kind.GATE_DONE, i, 5))
    assert not mgr.queue.running
    assert [e["op"] for e in mgr.queue.log] == ["enqueue", "admit", "retire"]


def test_accusation_threshold_and_result():
    mgr, info, finished = _mgr()
    mgr.route("p0", _msg(Kind.ACCUSE, 0, 3))
    assert not finished
    mgr.route("p1", _msg(Kind.ACCUSE, 1, 3))
    assert finished == [("s", 0, (0, 1, 3))]
    assert info.cheater == 3 and info.status is Status.RESUMABLE


def test_result_attest_threshold():
    mgr, info, finished = _mgr()
    mgr.route("p0", _msg(Kind.RESULT_ATTEST, 0, 42, 0, 0))
    mgr.route("p1", _msg(Kind.RESULT_ATTEST, 1, 41, 0, 0))  # different result, separate tally
    assert not finished
    mgr.route("p2", _msg(Kind.RESULT_ATTEST, 2, 42, 0, 0))
    assert finished == [("s", 0, (42, 0, 0))]


def test_stale_invocation_ignored():
    mgr, info, finished = _mgr()
    info.invocation_count = 1
    for i in range(2):
        mgr.route(PARTIES[i], _msg(Kind.RESULT_ATTEST, i, 1, 0, 0, inv=0))
    assert not finished


def test_non_member_and_non_eoa():
    mgr, _, _ = _mgr()
    with pytest.raises(NotCommitteeMember):
        mgr.route("stranger", _msg(Kind.READY, 0, 1))
    with pytest.raises(NotEOA):
        mgr.route("p0", _msg(Kind.READY, 0, 1), is_eoa=False)


def test_mark_finished_purges_queue():
    mgr, info, _ = _mgr(cap=1)
    for gate in (1, 2):
        for i in range(3):
            mgr.route(PARTIES[i], _msg(Kind.READY, i, gate))
    assert len(mgr.queue.running) == 1 and len(mgr.queue.queue) == 1
    mgr.mark_finished("s", (0, 0, 0))
    assert not mgr.queue.running and not mgr.queue.queue
    assert mgr.queue.log[-1]["op"] == "purge"
    assert mgr.live_sessions() == []


@given(st.integers(1, 4), st.lists(st.tuples(st.sampled_from("er"), st.integers(0, 7)), max_size=60))
def test_queue_cap_and_fifo(cap, ops):
    q = MultGateQueue(cap)
    admitted_order, enqueued_order = [], []
    seen = set()
    for op, g in ops:
        entry = ("s", 0, g)
        if op == "e" and entry not in seen:
            seen.add(entry)
            enqueued_order.append(entry)
            admitted_order += q.enqueue(entry, 3)
        elif op == "r":
            admitted_order += q.retire(entry, 3)
        assert len(q.running) <= cap
    assert admitted_order == enqueued_order[:len(admitted_order)]


def test_queue_rejects_zero_cap():
    with pytest.raises(ValueError):
        MultGateQueue(0)
