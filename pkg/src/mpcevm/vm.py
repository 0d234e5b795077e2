"""Mini contract VM: a stack IR with locals, per-contract storage and an MPC hook.

Programs are written in a line-oriented assembly::

    .contract Counter
    .method bump by
        SLOAD count
        LOADL by
        ADD
        SSTORE count
        STOP
    .end

Execution can stop in one of three ways: ``Completed``, ``Reverted`` or
``Suspended`` (at ``ENTER_MPC``).  A suspended context is resumed later with the
MPC result written to the named local, under a stricter access regime in which
only the locked contract itself and the manager contract may be touched.
"""

from __future__ import annotations

import copy
import hashlib
import shlex
from dataclasses import dataclass, field
from typing import Callable, Optional

DEFAULT_ENTER_MPC_GAS = 1000
BASE_TX_GAS = 21
WORD = 1 << 256


class AssemblyError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


class VMRevert(Exception):
    def __init__(self, cause: str, detail: str = ""):
        super().__init__(f"{cause}: {detail}" if detail else cause)
        self.cause = cause
        self.detail = detail


# ---------------------------------------------------------------- programs

@dataclass(frozen=True)
class Instr:
    op: str
    args: tuple = ()
    line: int = 0

    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class Method:
    name: str
    params: tuple
    code: tuple
    labels: dict

    def __deepcopy__(self, memo):
        return self


@dataclass(frozen=True)
class Program:
    name: str
    methods: dict
    source: str = ""

    def __deepcopy__(self, memo):
        return self

    @property
    def code_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()


# opcode -> (min args, max args); "label" operands are resolved per method
OPCODES = {
    "PUSH": (1, 1), "POP": (0, 0), "DUP": (0, 0), "OVER": (0, 0), "SWAP": (0, 0),
    "LOADL": (1, 1), "STOREL": (1, 1), "SLOAD": (0, 1), "SSTORE": (0, 1),
    "ADD": (0, 0), "SUB": (0, 0), "MUL": (0, 0), "DIV": (0, 0), "MOD": (0, 0),
    "LT": (0, 0), "GT": (0, 0), "LE": (0, 0), "GE": (0, 0), "EQ": (0, 0), "ISZERO": (0, 0),
    "AND": (0, 0), "OR": (0, 0),
    "JMP": (1, 1), "JZ": (1, 1), "JNZ": (1, 1), "JSUB": (1, 1), "RSUB": (0, 0),
    "LEN": (0, 0), "INDEX": (0, 0), "ASET": (0, 0), "ANEW": (0, 0), "APPEND": (0, 0), "PACK": (1, 1),
    "CALL": (2, 2), "DELEGATECALL": (2, 2), "CALLCODE": (2, 2),
    "BALANCE": (0, 0), "TRANSFER": (0, 0), "CREATE": (2, 2), "SELFDESTRUCT": (0, 0),
    "ENTER_MPC": (3, 4), "RETURN": (0, 0), "STOP": (0, 0), "REVERT": (0, 1), "REQUIRE": (0, 1),
    "TIMESTAMP": (0, 0), "NUMBER": (0, 0), "CALLER": (0, 0), "ORIGIN": (0, 0), "SELF": (0, 0),
    "CALLVALUE": (0, 0), "MPCMGR": (0, 0), "LOG": (2, 2),
}
JUMPS = {"JMP", "JZ", "JNZ", "JSUB"}


def _operand(tok: str):
    if tok.startswith('"') or tok.startswith("'"):
        return tok[1:-1]
    try:
        return int(tok, 0)
    except ValueError:
        return tok


def assemble(source: str, name: Optional[str] = None) -> Program:
    """Parse assembly text into a ``Program``.  Raises ``AssemblyError`` with a line number."""
    methods = {}
    cur = None
    contract = name
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".contract"):
            parts = line.split()
            if len(parts) != 2:
                raise AssemblyError(".contract needs a name", lineno)
            contract = contract or parts[1]
            continue
        if line.startswith(".method"):
            if cur is not None:
                raise AssemblyError("nested .method", lineno)
            parts = line.split()
            if len(parts) < 2:
                raise AssemblyError(".method needs a name", lineno)
            cur = {"name": parts[1], "params": tuple(parts[2:]), "code": [], "labels": {},
                   "line": lineno}
            continue
        if line == ".end":
            if cur is None:
                raise AssemblyError(".end outside method", lineno)
            methods[cur["name"]] = _finish_method(cur)
            cur = None
            continue
        if cur is None:
            raise AssemblyError(f"instruction outside method: {line}", lineno)
        if line.endswith(":") and " " not in line:
            label = line[:-1]
            if label in cur["labels"]:
                raise AssemblyError(f"duplicate label {label}", lineno)
            cur["labels"][label] = len(cur["code"])
            continue
        try:
            toks = shlex.split(line, posix=False)
        except ValueError as e:
            raise AssemblyError(str(e), lineno) from None
        op = toks[0].upper()
        if op not in OPCODES:
            raise AssemblyError(f"unknown opcode {toks[0]}", lineno)
        lo, hi = OPCODES[op]
        if not lo <= len(toks) - 1 <= hi:
            raise AssemblyError(f"{op} takes {lo}..{hi} operands", lineno)
        cur["code"].append(Instr(op, tuple(_operand(t) for t in toks[1:]), lineno))
    if cur is not None:
        raise AssemblyError(f"method {cur['name']} missing .end", cur["line"])
    if not contract:
        raise AssemblyError("missing .contract")
    return Program(contract, methods, source)


def _finish_method(cur) -> Method:
    code, labels = cur["code"], cur["labels"]
    for ins in code:
        if ins.op in JUMPS:
            target = ins.args[0]
            if target not in labels:
                raise AssemblyError(f"undefined label {target}", ins.line)
            if not 0 <= labels[target] <= len(code):
                raise AssemblyError(f"jump target {target} out of range", ins.line)
    return Method(cur["name"], cur["params"], tuple(code), dict(labels))


# ---------------------------------------------------------------- state

@dataclass
class Delta:
    """Uncommitted changes to one account."""
    balance: Optional[int] = None
    storage: dict = field(default_factory=dict)
    code: Optional[Program] = None
    created: bool = False
    destroyed: bool = False


@dataclass
class Frame:
    method: str
    address: str        # storage and balance context
    code_address: str   # whose code runs
    caller: str
    value: int
    locals: dict
    pc: int = 0
    stack: list = field(default_factory=list)
    rstack: list = field(default_factory=list)


@dataclass
class ExecutionContext:
    origin: str
    entry: str
    tx_hash: str
    gas_limit: int
    call_stack: list = field(default_factory=list)
    accessed: set = field(default_factory=set)
    pending_writes: dict = field(default_factory=dict)
    gas_used: int = 0
    events: list = field(default_factory=list)
    mpc_invocations: int = 0
    resumed: bool = False
    result_slot: Optional[str] = None

    @property
    def frame(self) -> Frame:
        return self.call_stack[-1]


@dataclass
class Completed:
    value: object
    ctx: ExecutionContext
    kind = "completed"


@dataclass
class Reverted:
    cause: str
    detail: str
    ctx: ExecutionContext
    kind = "reverted"


@dataclass
class Suspended:
    cid: int
    params: tuple
    parties: Optional[tuple]
    result_slot: str
    ctx: ExecutionContext
    kind = "suspended"


@dataclass
class Env:
    """Everything outside the context that execution may consult."""
    mgr: str
    locks: frozenset = frozenset()
    timestamp: int = 0
    height: int = 0
    enter_mpc_gas: int = DEFAULT_ENTER_MPC_GAS
    circuit_exists: Callable = lambda cid: True
    fixtures: dict = field(default_factory=dict)
    new_address: Optional[Callable] = None
    # returns the MPC result at once (serial replay), or None to suspend
    mpc_resolver: Optional[Callable] = None


class WorldView:
    """Committed accounts overlaid with a context's pending writes.

    ``base(addr)`` returns an object with ``balance``, ``storage`` and ``code``
    (or None).  ``audit(kind, addr, what)`` sees every state access.
    """

    def __init__(self, base: Callable, pending: dict, audit: Optional[Callable] = None):
        self.base = base
        self.pending = pending
        self.audit = audit

    def _a(self, kind, addr, what):
        if self.audit is not None:
            self.audit(kind, addr, what)

    def _delta(self, addr) -> Delta:
        d = self.pending.get(addr)
        if d is None:
            d = self.pending[addr] = Delta()
        return d

    def exists(self, addr) -> bool:
        d = self.pending.get(addr)
        if d is not None and (d.created or d.destroyed):
            return not d.destroyed
        return self.base(addr) is not None

    def code(self, addr) -> Optional[Program]:
        d = self.pending.get(addr)
        if d is not None and d.destroyed:
            return None
        if d is not None and d.code is not None:
            return d.code
        acct = self.base(addr)
        return None if acct is None else acct.code

    def balance(self, addr) -> int:
        self._a("read", addr, "balance")
        d = self.pending.get(addr)
        if d is not None and d.balance is not None:
            return d.balance
        acct = self.base(addr)
        return 0 if acct is None else acct.balance

    def add_balance(self, addr, delta: int):
        cur = self.balance(addr)
        if cur + delta < 0:
            raise VMRevert("InsufficientBalance", addr)
        self._a("write", addr, "balance")
        self._delta(addr).balance = cur + delta

    def sload(self, addr, key):
        self._a("read", addr, "storage")
        d = self.pending.get(addr)
        if d is not None and key in d.storage:
            return d.storage[key]
        if d is not None and d.created:
            return 0
        acct = self.base(addr)
        return 0 if acct is None else acct.storage.get(key, 0)

    def sstore(self, addr, key, value):
        self._a("write", addr, "storage")
        self._delta(addr).storage[key] = value

    def create(self, addr, code: Program):
        self._a("write", addr, "code")
        d = self._delta(addr)
        d.created, d.code, d.balance = True, code, d.balance if d.balance is not None else 0


# ---------------------------------------------------------------- access policy

def access_check(ctx: ExecutionContext, opcode: str, target: Optional[str], locks, value: int = 0,
                 mgr: Optional[str] = None) -> Optional[str]:
    """Return None to allow, or the reason for denial.

    ``locks`` holds every contract currently owned by a suspended transaction.  A
    resumed execution owns ``ctx.entry`` and may touch only it and the manager.
    """
    here = ctx.frame.address if ctx.call_stack else ctx.entry
    if ctx.resumed:
        if opcode == "CREATE":
            return "locked contract may not deploy contracts"
        if opcode == "SELFDESTRUCT":
            return "locked contract may not self-destruct"
        if opcode == "DELEGATECALL" and value == 0:
            return None
        if target not in (ctx.entry, mgr):
            return f"resumed execution may touch only {ctx.entry} or the manager, not {target}"
        return None
    if opcode == "CREATE":
        return "locked contract may not deploy contracts" if here in locks else None
    if opcode == "SELFDESTRUCT":
        if here in locks:
            return "locked contract may not self-destruct"
        if target in locks:
            return "refund target is locked"
        return None
    if target not in locks:
        return None
    if opcode == "DELEGATECALL":
        return None  # borrowing code reads no state of the locked contract
    if opcode == "CALLCODE":
        return "value transfer with locked code" if value else None
    return f"{target} is locked by an ongoing MPC"


# ---------------------------------------------------------------- interpreter

def _num(x):
    if isinstance(x, bool):
        return int(x)
    if not isinstance(x, int):
        raise VMRevert("BadOperand", f"expected integer, got {x!r}")
    return x


def _arr(x):
    if not isinstance(x, tuple):
        raise VMRevert("BadOperand", f"expected array, got {x!r}")
    return x


class Interpreter:
    def __init__(self, world: WorldView, env: Env):
        self.world = world
        self.env = env

    def _check(self, ctx, opcode, target, value=0):
        reason = access_check(ctx, opcode, target, self.env.locks, value, self.env.mgr)
        if reason is not None:
            raise VMRevert("AccessViolation", reason)

    def _transfer(self, src, dst, value):
        if value:
            self.world.add_balance(src, -value)
            self.world.add_balance(dst, value)

    def _push_frame(self, ctx, code_addr, storage_addr, method, args, caller, value):
        prog = self.world.code(code_addr)
        if prog is None or method not in prog.methods:
            raise VMRevert("UnknownMethod", f"{method} at {code_addr}")
        m = prog.methods[method]
        if len(args) != len(m.params):
            raise VMRevert("BadArity", f"{method} takes {len(m.params)} args")
        ctx.call_stack.append(Frame(method, storage_addr, code_addr, caller, value,
                                    dict(zip(m.params, args))))

    def begin(self, ctx, target, method, args, caller, value):
        """Set up the entry frame (value already moved by the caller)."""
        ctx.accessed.add(target)
        self._push_frame(ctx, target, target, method, list(args), caller, value)

    def run(self, ctx: ExecutionContext):
        try:
            while True:
                out = self.step(ctx)
                if out is not None:
                    return out
        except VMRevert as e:
            return Reverted(e.cause, e.detail, ctx)

    def resume(self, ctx: ExecutionContext, result):
        ctx.frame.locals[ctx.result_slot] = tuple(result)
        ctx.frame.pc += 1
        ctx.resumed = True
        return self.run(ctx)

    def step(self, ctx: ExecutionContext):
        f = ctx.frame
        prog = self.world.code(f.code_address)
        method = prog.methods[f.method]
        if f.pc >= len(method.code):
            return self._return(ctx, None)
        ins = method.code[f.pc]
        ctx.gas_used += 1
        if ctx.gas_used > ctx.gas_limit:
            raise VMRevert("OutOfGas")
        st = f.stack
        op, args = ins.op, ins.args

        def pop():
            if not st:
                raise VMRevert("StackUnderflow", f"{op} at line {ins.line}")
            return st.pop()

        nxt = f.pc + 1
        if op == "PUSH":
            st.append(args[0])
        elif op == "POP":
            pop()
        elif op == "DUP":
            v = pop()
            st += [v, v]
        elif op == "OVER":
            b, a = pop(), pop()
            st += [a, b, a]
        elif op == "SWAP":
            b, a = pop(), pop()
            st += [b, a]
        elif op == "LOADL":
            if args[0] not in f.locals:
                raise VMRevert("UnknownLocal", str(args[0]))
            st.append(f.locals[args[0]])
        elif op == "STOREL":
            f.locals[args[0]] = pop()
        elif op == "SLOAD":
            key = args[0] if args else pop()
            st.append(self.world.sload(f.address, key))
        elif op == "SSTORE":
            key = args[0] if args else pop()
            self.world.sstore(f.address, key, pop())
        elif op in ("ADD", "SUB", "MUL", "DIV", "MOD", "LT", "GT", "LE", "GE", "AND", "OR"):
            b, a = _num(pop()), _num(pop())
            st.append(self._arith(op, a, b))
        elif op == "EQ":
            b, a = pop(), pop()
            st.append(int(a == b))
        elif op == "ISZERO":
            st.append(int(not pop()))
        elif op in ("JMP", "JZ", "JNZ", "JSUB"):
            target = method.labels[args[0]]
            if op == "JMP":
                nxt = target
            elif op == "JSUB":
                f.rstack.append(nxt)
                nxt = target
            else:
                v = pop()
                if (op == "JZ") == (not v):
                    nxt = target
        elif op == "RSUB":
            if not f.rstack:
                raise VMRevert("BadJump", "RSUB with empty return stack")
            nxt = f.rstack.pop()
        elif op == "LEN":
            st.append(len(_arr(pop())))
        elif op == "INDEX":
            i, a = _num(pop()), _arr(pop())
            if not 0 <= i < len(a):
                raise VMRevert("IndexOutOfRange", f"{i} of {len(a)}")
            st.append(a[i])
        elif op == "ASET":
            v, i, a = pop(), _num(pop()), _arr(pop())
            if not 0 <= i < len(a):
                raise VMRevert("IndexOutOfRange", f"{i} of {len(a)}")
            st.append(a[:i] + (v,) + a[i + 1:])
        elif op == "ANEW":
            st.append((0,) * _num(pop()))
        elif op == "APPEND":
            v, a = pop(), _arr(pop())
            st.append(a + (v,))
        elif op == "PACK":
            k = args[0]
            if len(st) < k:
                raise VMRevert("StackUnderflow", "PACK")
            items = tuple(st[len(st) - k:]) if k else ()
            del st[len(st) - k:]
            st.append(items)
        elif op in ("CALL", "CALLCODE", "DELEGATECALL"):
            f.pc = nxt
            return self._call(ctx, op, args[0], args[1])
        elif op == "BALANCE":
            target = pop()
            self._check(ctx, "BALANCE", target)
            ctx.accessed.add(target)
            st.append(self.world.balance(target))
        elif op == "TRANSFER":
            value, target = _num(pop()), pop()
            self._check(ctx, "TRANSFER", target, value)
            ctx.accessed.add(target)
            self._transfer(f.address, target, value)
        elif op == "CREATE":
            f.pc = nxt
            return self._create(ctx, args[0], args[1])
        elif op == "SELFDESTRUCT":
            target = pop()
            self._check(ctx, "SELFDESTRUCT", target)
            ctx.accessed.add(target)
            self._transfer(f.address, target, self.world.balance(f.address))
            self.world._delta(f.address).destroyed = True
            return self._return(ctx, None)
        elif op == "ENTER_MPC":
            return self._enter_mpc(ctx, ins)
        elif op == "RETURN":
            return self._return(ctx, pop())
        elif op == "STOP":
            return self._return(ctx, None)
        elif op == "REVERT":
            raise VMRevert("ExplicitRevert", args[0] if args else "")
        elif op == "REQUIRE":
            if not pop():
                raise VMRevert("ExplicitRevert", args[0] if args else "require failed")
        elif op == "TIMESTAMP":
            st.append(self.env.timestamp)
        elif op == "NUMBER":
            st.append(self.env.height)
        elif op == "CALLER":
            st.append(f.caller)
        elif op == "ORIGIN":
            st.append(ctx.origin)
        elif op == "SELF":
            st.append(f.address)
        elif op == "CALLVALUE":
            st.append(f.value)
        elif op == "MPCMGR":
            st.append(self.env.mgr)
        elif op == "LOG":
            k = args[1]
            vals = [pop() for _ in range(k)][::-1]
            ctx.events.append({"address": f.address, "event": args[0], "args": list(vals)})
        f.pc = nxt
        return None

    @staticmethod
    def _arith(op, a, b):
        if op == "ADD":
            r = a + b
        elif op == "SUB":
            if b > a:
                raise VMRevert("Underflow", f"{a} - {b}")
            r = a - b
        elif op == "MUL":
            r = a * b
        elif op in ("DIV", "MOD"):
            if b == 0:
                raise VMRevert("DivByZero")
            r = a // b if op == "DIV" else a % b
        elif op == "LT":
            r = int(a < b)
        elif op == "GT":
            r = int(a > b)
        elif op == "LE":
            r = int(a <= b)
        elif op == "GE":
            r = int(a >= b)
        elif op == "AND":
            r = int(bool(a) and bool(b))
        else:
            r = int(bool(a) or bool(b))
        if r >= WORD:
            raise VMRevert("Overflow")
        return r

    def _call(self, ctx, op, method, argc):
        f = ctx.frame
        st = f.stack
        if len(st) < argc + (2 if op != "DELEGATECALL" else 1):
            raise VMRevert("StackUnderflow", op)
        value = _num(st.pop()) if op != "DELEGATECALL" else 0
        target = st.pop()
        args = st[len(st) - argc:] if argc else []
        del st[len(st) - argc:]
        self._check(ctx, op, target, value)
        if target == self.env.mgr:
            raise VMRevert("NotEOA", "manager broadcasts must come from an externally owned account")
        if op == "CALL":
            ctx.accessed.add(target)
            self._transfer(f.address, target, value)
            if self.world.code(target) is None:
                st.append(1)  # plain value transfer to an account without code
                return None
            self._push_frame(ctx, target, target, method, args, f.address, value)
        elif op == "CALLCODE":
            if self.world.code(target) is None:
                raise VMRevert("UnknownMethod", f"no code at {target}")
            self._push_frame(ctx, target, f.address, method, args, f.address, value)
        else:
            if self.world.code(target) is None:
                raise VMRevert("UnknownMethod", f"no code at {target}")
            self._push_frame(ctx, target, f.address, method, args, f.caller, f.value)
        return None

    def _create(self, ctx, fixture, argc):
        f = ctx.frame
        st = f.stack
        if len(st) < argc + 1:
            raise VMRevert("StackUnderflow", "CREATE")
        value = _num(st.pop())
        args = st[len(st) - argc:] if argc else []
        del st[len(st) - argc:]
        self._check(ctx, "CREATE", None, value)
        prog = self.env.fixtures.get(fixture)
        if prog is None or self.env.new_address is None:
            raise VMRevert("UnknownFixture", str(fixture))
        addr = self.env.new_address(f.address)
        self.world.create(addr, prog)
        ctx.accessed.add(addr)
        self._transfer(f.address, addr, value)
        st.append(addr)
        if "constructor" in prog.methods:
            self._push_frame(ctx, addr, addr, "constructor", args, f.address, value)
            ctx.frame.stack = []
            # the constructor's return value is discarded; the address is already pushed
            ctx.frame.locals["__ctor__"] = 1
        return None

    def _return(self, ctx, value):
        done = ctx.call_stack.pop()
        if not ctx.call_stack:
            ctx.call_stack.append(done)  # keep the entry frame for inspection
            return Completed(value, ctx)
        if "__ctor__" not in done.locals:
            ctx.frame.stack.append(0 if value is None else value)
        return None

    def _enter_mpc(self, ctx, ins):
        f = ctx.frame
        ctx.gas_used += self.env.enter_mpc_gas
        if ctx.gas_used > ctx.gas_limit:
            raise VMRevert("OutOfGas")
        cid_slot, params_slot, result_slot = ins.args[:3]
        for s in ins.args[:2] + tuple(ins.args[3:]):
            if s not in f.locals:
                raise VMRevert("UnknownLocal", str(s))
        cid = _num(f.locals[cid_slot])
        params = f.locals[params_slot]
        params = tuple(params) if isinstance(params, tuple) else (params,)
        parties = tuple(f.locals[ins.args[3]]) if len(ins.args) > 3 else None
        if not self.env.circuit_exists(cid):
            raise VMRevert("UnknownCircuit", str(cid))
        if ctx.mpc_invocations == 0:
            others = ctx.accessed - {self.env.mgr, ctx.entry}
            if others or f.address != ctx.entry:
                raise VMRevert("AccessViolation", f"contracts accessed before MPC: {sorted(others)}")
            allowed = {ctx.origin, self.env.mgr, ctx.entry}
            stray = set(ctx.pending_writes) - allowed
            if stray:
                raise VMRevert("AccessViolation", f"writes outside the MPC contract: {sorted(stray)}")
        ctx.mpc_invocations += 1
        ctx.result_slot = result_slot
        if self.env.mpc_resolver is not None:
            result = self.env.mpc_resolver(ctx, cid, params, parties)
            if result is not None:
                f.locals[result_slot] = tuple(result)
                f.pc += 1
                ctx.resumed = True
                return None
        return Suspended(cid, params, parties, result_slot, ctx)


def snapshot(ctx: ExecutionContext) -> ExecutionContext:
    """Deep copy of a context; programs are shared since they are immutable."""
    return copy.deepcopy(ctx)


def exec_method(world: WorldView, env: Env, ctx: ExecutionContext, target: str, method: str,
                args=(), caller: Optional[str] = None, value: int = 0):
    interp = Interpreter(world, env)
    try:
        interp.begin(ctx, target, method, args, caller or ctx.origin, value)
    except VMRevert as e:
        return Reverted(e.cause, e.detail, ctx)
    return interp.run(ctx)


def resume(saved_ctx: ExecutionContext, result, world: WorldView, env: Env):
    """Continue a suspended context with ``result`` placed in its result slot.

    The saved context is copied first, so resuming twice gives identical outcomes.
    """
    ctx = snapshot(saved_ctx)
    world.pending = ctx.pending_writes
    return Interpreter(world, env).resume(ctx, result)
