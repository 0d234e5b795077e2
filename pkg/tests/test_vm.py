from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from mpcevm import vm

SRC = """
.contract Calc
; arithmetic and control flow
.method addmul a b
    LOADL a
    LOADL b
    ADD
    PUSH 3
    MUL
    RETURN
.end

.method loop n
    PUSH 0
    STOREL acc
top:
    LOADL n
    JZ done
    LOADL acc
    LOADL n
    ADD
    STOREL acc
    LOADL n
    PUSH 1
    SUB
    STOREL n
    JMP top
done:
    LOADL acc
    SSTORE total
    LOADL acc
    RETURN
.end

.method guarded x
    LOADL x
    REQUIRE "x must be nonzero"
    LOADL x
    RETURN
.end

.method arrays
    PUSH 0
    ANEW
    PUSH 7
    APPEND
    PUSH 9
    APPEND
    PUSH 1
    INDEX
    RETURN
.end

.method mpc cid params
    PUSH 0
    STOREL parties
    ENTER_MPC cid params result
    LOADL result
    SSTORE last
    STOP
.end

.method poke who
    LOADL who
    PUSH 0
    CALL setX 0
    STOP
.end
"""

PROG = vm.assemble(SRC)


def _world(accounts=None):
    accounts = accounts if accounts is not None else {}
    return vm.WorldView(lambda a: accounts.get(a), {}), accounts


def _run(method, args=(), locks=frozenset(), accounts=None):
    accounts = accounts if accounts is not None else {}
    accounts.setdefault("calc", SimpleNamespace(balance=0, storage={}, code=PROG))
    world, _ = _world(accounts)
    env = vm.Env(mgr="mgr", locks=locks)
    ctx = vm.ExecutionContext(origin="alice", entry="calc", tx_hash="h", gas_limit=10_000,
                              pending_writes=world.pending)
    return vm.exec_method(world, env, ctx, "calc", method, args), world


def test_assembler_errors_carry_line():
    with pytest.raises(vm.AssemblyError) as e:
        vm.assemble(".contract X\n.method m\n    FROB\n.end\n")
    assert e.value.line == 3
    with pytest.raises(vm.AssemblyError):
        vm.assemble(".contract X\n.method m\n    STOP\n")
    with pytest.raises(vm.AssemblyError):
        vm.assemble(".method m\nSTOP\n.end\n")


@given(st.integers(0, 2**64), st.integers(0, 2**64))
def test_arithmetic(a, b):
    out, _ = _run("addmul", (a, b))
    assert isinstance(out, vm.Completed) and out.value == (a + b) * 3


def test_loop_and_storage_write():
    out, world = _run("loop", (10,))
    assert out.value == 55
    assert world.pending["calc"].storage["total"] == 55


def test_require_reverts():
    out, _ = _run("guarded", (0,))
    assert isinstance(out, vm.Reverted) and out.cause == "ExplicitRevert"
    assert _run("guarded", (4,))[0].value == 4


def test_arrays():
    assert _run("arrays")[0].value == 9


def test_bad_arity_and_unknown_method():
    assert _run("guarded", ())[0].cause == "BadArity"
    assert _run("nope")[0].cause == "UnknownMethod"


def test_enter_mpc_suspends_and_resume_is_repeatable():
    out, world = _run("mpc", (0, (1, 2)))
    assert isinstance(out, vm.Suspended)
    assert out.cid == 0 and tuple(out.params) == (1, 2) and out.result_slot == "result"
    saved = vm.snapshot(out.ctx)
    env = vm.Env(mgr="mgr")
    accounts = {"calc": SimpleNamespace(balance=0, storage={}, code=PROG)}
    a = vm.resume(saved, (42, 0, 0), vm.WorldView(accounts.get, {}), env)
    b = vm.resume(saved, (42, 0, 0), vm.WorldView(accounts.get, {}), env)
    assert isinstance(a, vm.Completed)
    assert a.ctx.pending_writes["calc"].storage == b.ctx.pending_writes["calc"].storage
    assert a.ctx.pending_writes["calc"].storage["last"] == (42, 0, 0)


def test_call_into_locked_contract_denied():
    other = SimpleNamespace(balance=0, storage={}, code=vm.assemble(
        ".contract O\n.method setX\n    PUSH 1\n    SSTORE x\n    STOP\n.end\n"))
    out, _ = _run("poke", ("other",), locks=frozenset({"other"}), accounts={"other": other})
    assert isinstance(out, vm.Reverted) and out.cause == "AccessViolation" and "locked" in out.detail
    ok, world = _run("poke", ("other",), accounts={"other": other})
    assert isinstance(ok, vm.Completed) and world.pending["other"].storage["x"] == 1


def _ctx(resumed=False, entry="c1"):
    ctx = vm.ExecutionContext(origin="alice", entry=entry, tx_hash="h", gas_limit=1)
    ctx.resumed = resumed
    ctx.call_stack.append(vm.Frame("m", entry, entry, "alice", 0, {}))
    return ctx


def test_access_policy_table():
    locks = frozenset({"c1"})
    ctx = _ctx(entry="c3")
    assert vm.access_check(ctx, "CALL", "c1", locks) is not None
    assert vm.access_check(ctx, "BALANCE", "c1", locks) is not None
    assert vm.access_check(ctx, "DELEGATECALL", "c1", locks) is None
    assert vm.access_check(ctx, "CALLCODE", "c1", locks, value=5) is not None
    assert vm.access_check(ctx, "CALL", "c2", locks) is None
    resumed = _ctx(resumed=True)
    assert vm.access_check(resumed, "CALL", "c1", locks, mgr="mgr") is None
    assert vm.access_check(resumed, "CALL", "mgr", locks, mgr="mgr") is None
    assert vm.access_check(resumed, "CALL", "c2", locks, mgr="mgr") is not None
    assert vm.access_check(resumed, "CREATE", None, locks, mgr="mgr") is not None
    assert vm.access_check(resumed, "SELFDESTRUCT", "c1", locks, mgr="mgr") is not None
