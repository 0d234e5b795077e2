"""Account-model ledger with suspendable MPC transactions.

Four transaction kinds are applied strictly in block order:

* ``CreateTx``   deploy a contract (constructor runs in the VM),
* ``RegularTx``  value transfer and/or method call; may suspend at ``ENTER_MPC``,
* ``MpcMessageTx`` a batch of committee broadcasts for one session,
* ``MpcRetTx``   a committee member's result attestation.

A suspended transaction commits its "ready" part at once (sender nonce, value
debit, fee) and parks the rest in ``saved_mpc`` under the locked contract.  The
resume happens inside whichever transaction completes the attestation quorum.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import vm
from .circuit import CircuitRegistry
from .engine.messages import MpcMessage
from .txmgr import MPCMGR_ADDRESS, MPCInfo, NotCommitteeMember, TxManager, TxMgrError, UnknownSession

GAS_SINK = "0x" + "00" * 19 + "fe"


class LedgerError(Exception):
    pass


class InsufficientBalance(LedgerError):
    pass


class BadNonce(LedgerError):
    pass


class UnknownSavedState(LedgerError):
    pass


def eoa_address(label: str) -> str:
    return "0x" + hashlib.sha256(f"eoa:{label}".encode()).hexdigest()[:40]


def contract_address(sender: str, nonce: int) -> str:
    return "0x" + hashlib.sha256(f"{sender}|{nonce}".encode()).hexdigest()[:40]


# ---------------------------------------------------------------- transactions

def _enc(x) -> bytes:
    """Length-prefixed canonical encoding of nested ints / strings / sequences."""
    if isinstance(x, bool):
        x = int(x)
    if isinstance(x, int):
        body = str(x).encode()
        return b"i" + struct.pack(">I", len(body)) + body
    if isinstance(x, str):
        body = x.encode()
        return b"s" + struct.pack(">I", len(body)) + body
    if x is None:
        return b"n"
    if isinstance(x, (tuple, list)):
        parts = b"".join(_enc(v) for v in x)
        return b"l" + struct.pack(">I", len(parts)) + parts
    if isinstance(x, MpcMessage):
        return _enc((x.session, x.invocation, x.kind.value, x.sender, x.payload))
    raise TypeError(f"cannot encode {type(x).__name__}")


@dataclass(frozen=True)
class CreateTx:
    sender: str
    nonce: int
    fixture: str
    args: tuple = ()
    value: int = 0
    gas_limit: int = 100_000
    kind = "create"

    def fields(self):
        return (self.sender, self.nonce, self.fixture, self.args, self.value, self.gas_limit)


@dataclass(frozen=True)
class RegularTx:
    sender: str
    nonce: int
    target: str
    method: Optional[str] = None
    args: tuple = ()
    value: int = 0
    gas_limit: int = 100_000
    kind = "regular"

    def fields(self):
        return (self.sender, self.nonce, self.target, self.method, self.args, self.value, self.gas_limit)


@dataclass(frozen=True)
class MpcMessageTx:
    sender: str
    nonce: int
    session: str
    msgs: tuple
    gas_limit: int = 0
    kind = "mpcmessage"

    def fields(self):
        return (self.sender, self.nonce, self.session, self.msgs)


@dataclass(frozen=True)
class MpcRetTx:
    sender: str
    nonce: int
    session: str
    ret: MpcMessage
    gas_limit: int = 0
    kind = "mpcret"

    def fields(self):
        return (self.sender, self.nonce, self.session, self.ret)


KIND_TAGS = {"create": 1, "regular": 2, "mpcmessage": 3, "mpcret": 4}


def encode_tx(tx) -> bytes:
    return bytes([KIND_TAGS[tx.kind]]) + _enc(tx.fields())


def tx_hash(tx) -> str:
    return "0x" + hashlib.sha256(encode_tx(tx)).hexdigest()


def is_mpc_class(tx) -> bool:
    return tx.kind in ("mpcmessage", "mpcret")


# ---------------------------------------------------------------- state

@dataclass
class Account:
    nonce: int = 0
    balance: int = 0
    storage: dict = field(default_factory=dict)
    code: Optional[vm.Program] = None

    def canonical(self):
        return [self.nonce, self.balance, sorted(([_jkey(k), _jval(v)] for k, v in self.storage.items())),
                self.code.code_hash if self.code else None]


def _jkey(k):
    return json.dumps(_jval(k), separators=(",", ":"))


def _jval(v):
    if isinstance(v, tuple):
        return [_jval(x) for x in v]
    return v


@dataclass
class SavedMpcState:
    result_slot: str
    session: str
    ctx: vm.ExecutionContext
    locked: str
    origin: str
    value: int
    invocation: int
    cid: int
    params: tuple

    def metadata(self):
        return [self.locked, self.session, self.invocation, self.cid, list(self.params)]


@dataclass
class Receipt:
    tx_hash: str
    kind: str
    sender: str
    status: str  # success | reverted | suspended | rejected
    gas_used: int
    events: list = field(default_factory=list)
    cause: Optional[str] = None
    detail: str = ""
    height: int = 0

    def to_json(self) -> dict:
        d = {"tx_hash": self.tx_hash, "status": self.status, "gas_used": self.gas_used,
             "events": self.events}
        if self.cause:
            d["cause"] = self.cause
        return d


@dataclass
class LedgerConfig:
    genesis_time: int = 1_700_000_000
    block_seconds: int = 12
    gas_price: int = 1
    enter_mpc_gas: int = vm.DEFAULT_ENTER_MPC_GAS
    max_parallel_mults: int = 4


class Ledger:
    def __init__(self, registry: Optional[CircuitRegistry] = None, config: Optional[LedgerConfig] = None,
                 fixtures: Optional[dict] = None):
        self.config = config or LedgerConfig()
        self.registry = registry if registry is not None else CircuitRegistry()
        self.fixtures = dict(fixtures or {})
        self.height = 0
        self.accounts = {}
        self.saved_mpc = {}      # locked address -> SavedMpcState
        self.lock_index = {}     # session tx hash -> locked address
        self.txmgr = TxManager(self.registry, self.config.max_parallel_mults, self._finish_hook)
        self.events = []         # released at commit
        self.audit = []          # violations of the lock discipline
        self.access_log_count = 0
        self.blocks = []         # [(height, [tx...], [receipt...])]
        self.session_outcomes = {}  # session -> dict
        self._cur_receipt = None
        self._cur_tx = None
        self._suspended_by = {}  # session -> receipt of the suspending tx
        self.mpc_results = {}    # (session, invocation) -> result, for replay
        self.default_committee = ()
        self.default_t = None
        self.ensure(MPCMGR_ADDRESS)
        self.ensure(GAS_SINK)

    # ---- accounts

    def ensure(self, addr) -> Account:
        a = self.accounts.get(addr)
        if a is None:
            a = self.accounts[addr] = Account()
        return a

    def account(self, addr) -> Optional[Account]:
        return self.accounts.get(addr)

    def fund(self, addr, amount):
        self.ensure(addr).balance += amount

    def locks(self) -> frozenset:
        return frozenset(self.saved_mpc)

    def timestamp(self, height=None) -> int:
        h = self.height if height is None else height
        return self.config.genesis_time + h * self.config.block_seconds

    def total_balance(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def storage(self, addr, key, default=0):
        a = self.accounts.get(addr)
        return default if a is None else a.storage.get(key, default)

    # ---- hashing

    def state_hash(self) -> str:
        doc = {"height": self.height,
               "accounts": {k: self.accounts[k].canonical() for k in sorted(self.accounts)},
               "saved": [self.saved_mpc[k].metadata() for k in sorted(self.saved_mpc)]}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def account_digest(self) -> str:
        """Digest of balances, nonces, storage and code only (used by the serial audit)."""
        doc = {k: self.accounts[k].canonical() for k in sorted(self.accounts)}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def mpc_digest(self) -> str:
        doc = {h: i.summary() for h, i in sorted(self.txmgr.sessions.items())}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    # ---- VM plumbing

    def _audit_hook(self, owner_session: Optional[str]):
        locks = dict((addr, s.session) for addr, s in self.saved_mpc.items())

        def hook(kind, addr, what):
            self.access_log_count += 1
            holder = locks.get(addr)
            if holder is not None and holder != owner_session:
                self.audit.append({"height": self.height, "tx": self._cur_tx, "address": addr,
                                   "access": kind, "what": what, "locked_by": holder})
        return hook

    def _env(self, resolver=None) -> vm.Env:
        return vm.Env(mgr=MPCMGR_ADDRESS, locks=self.locks(), timestamp=self.timestamp(self.height + 1),
                      height=self.height + 1, enter_mpc_gas=self.config.enter_mpc_gas,
                      circuit_exists=lambda cid: cid in self.registry, fixtures=self.fixtures,
                      new_address=self._new_address, mpc_resolver=resolver)

    def _new_address(self, creator) -> str:
        a = self.ensure(creator)
        addr = contract_address(creator, a.nonce)
        a.nonce += 1  # contracts bump their own nonce on CREATE
        return addr

    def _apply_delta(self, pending: dict):
        for addr in sorted(pending):
            d = pending[addr]
            if d.destroyed:
                self.accounts.pop(addr, None)
                continue
            a = self.ensure(addr)
            if d.balance is not None:
                a.balance = d.balance
            if d.code is not None:
                a.code = d.code
            a.storage.update(d.storage)

    def _charge(self, sender, gas):
        fee = gas * self.config.gas_price
        self.accounts[sender].balance -= fee
        self.ensure(GAS_SINK).balance += fee

    def _precheck(self, tx, h) -> Optional[Receipt]:
        a = self.accounts.get(tx.sender)
        if a is None or a.code is not None:
            return Receipt(h, tx.kind, tx.sender, "rejected", 0, cause="NotEOA")
        if tx.nonce != a.nonce:
            return Receipt(h, tx.kind, tx.sender, "rejected", 0, cause="BadNonce",
                           detail=f"expected {a.nonce}")
        need = getattr(tx, "value", 0) + tx.gas_limit * self.config.gas_price
        if a.balance < need:
            return Receipt(h, tx.kind, tx.sender, "rejected", 0, cause="InsufficientBalance")
        return None

    # ---- transaction rules

    def apply(self, tx, resolver=None) -> Receipt:
        h = tx_hash(tx)
        self._cur_tx = h
        rej = self._precheck(tx, h)
        if rej is not None:
            rej.height = self.height + 1
            return rej
        fn = {"create": self.apply_create, "regular": self.apply_regular,
              "mpcmessage": self.apply_mpc_message, "mpcret": self.apply_mpc_ret}[tx.kind]
        r = fn(tx, h, resolver) if tx.kind in ("create", "regular") else fn(tx, h)
        r.height = self.height + 1
        return r

    def apply_create(self, tx: CreateTx, h: str, resolver=None) -> Receipt:
        sender = self.accounts[tx.sender]
        addr = contract_address(tx.sender, tx.nonce)
        sender.nonce += 1
        prog = self.fixtures.get(tx.fixture)
        ctx = vm.ExecutionContext(tx.sender, addr, h, tx.gas_limit, gas_used=vm.BASE_TX_GAS)
        world = vm.WorldView(self.account, ctx.pending_writes, self._audit_hook(None))
        if prog is None:
            self._charge(tx.sender, ctx.gas_used)
            return Receipt(h, tx.kind, tx.sender, "reverted", ctx.gas_used, cause="UnknownFixture")
        try:
            world.create(addr, prog)
            world.add_balance(tx.sender, -tx.value)
            world.add_balance(addr, tx.value)
        except vm.VMRevert as e:
            self._charge(tx.sender, ctx.gas_used)
            return Receipt(h, tx.kind, tx.sender, "reverted", ctx.gas_used, cause=e.cause)
        if "constructor" in prog.methods:
            out = vm.exec_method(world, self._env(resolver), ctx, addr, "constructor", tx.args, tx.sender, tx.value)
        else:
            out = vm.Completed(None, ctx)
        if isinstance(out, vm.Suspended):
            out = vm.Reverted("AccessViolation", "constructors may not enter MPC", ctx)
        if isinstance(out, vm.Reverted):
            self._charge(tx.sender, min(ctx.gas_used, tx.gas_limit))
            return Receipt(h, tx.kind, tx.sender, "reverted", min(ctx.gas_used, tx.gas_limit),
                           cause=out.cause, detail=out.detail)
        self._apply_delta(ctx.pending_writes)
        self._charge(tx.sender, ctx.gas_used)
        return Receipt(h, tx.kind, tx.sender, "success", ctx.gas_used,
                       events=[{"event": "Created", "address": addr}] + ctx.events)

    def apply_regular(self, tx: RegularTx, h: str, resolver=None, bump_nonce: bool = True) -> Receipt:
        sender = self.accounts[tx.sender]
        if bump_nonce:
            sender.nonce += 1
        locks = self.locks()
        if tx.target in locks:
            # denied outright: the locked contract is not read, not even its code
            self._charge(tx.sender, vm.BASE_TX_GAS)
            return Receipt(h, tx.kind, tx.sender, "reverted", vm.BASE_TX_GAS, cause="AccessViolation",
                           detail=f"{tx.target} is locked by an ongoing MPC")
        ctx = vm.ExecutionContext(tx.sender, tx.target, h, tx.gas_limit, gas_used=vm.BASE_TX_GAS)
        world = vm.WorldView(self.account, ctx.pending_writes, self._audit_hook(None))
        try:
            world.add_balance(tx.sender, -tx.value)
            world.add_balance(tx.target, tx.value)
        except vm.VMRevert as e:
            self._charge(tx.sender, ctx.gas_used)
            return Receipt(h, tx.kind, tx.sender, "reverted", ctx.gas_used, cause=e.cause)
        if tx.method is None or world.code(tx.target) is None:
            if tx.method is not None:
                self._charge(tx.sender, ctx.gas_used)
                return Receipt(h, tx.kind, tx.sender, "reverted", ctx.gas_used, cause="UnknownMethod")
            self._apply_delta(ctx.pending_writes)
            self._charge(tx.sender, ctx.gas_used)
            return Receipt(h, tx.kind, tx.sender, "success", ctx.gas_used)
        out = vm.exec_method(world, self._env(resolver), ctx, tx.target, tx.method, tx.args, tx.sender, tx.value)
        gas = min(ctx.gas_used, tx.gas_limit)
        if ctx.mpc_invocations and not isinstance(out, vm.Suspended):
            gas = tx.gas_limit  # an MPC transaction never gets a refund, even when replayed
        if isinstance(out, vm.Completed):
            self._apply_delta(ctx.pending_writes)
            self._charge(tx.sender, gas)
            return Receipt(h, tx.kind, tx.sender, "success", gas, events=ctx.events)
        if isinstance(out, vm.Reverted):
            self._charge(tx.sender, gas)
            return Receipt(h, tx.kind, tx.sender, "reverted", gas, cause=out.cause, detail=out.detail)
        return self._suspend(tx, h, out)

    def _suspend(self, tx: RegularTx, h: str, out: vm.Suspended) -> Receipt:
        ctx = out.ctx
        c = tx.target
        # ready partition: the sender's balance change commits now, everything else waits
        ready = {k: v for k, v in ctx.pending_writes.items() if k == tx.sender}
        ctx.pending_writes = {k: v for k, v in ctx.pending_writes.items() if k != tx.sender}
        self._apply_delta(ready)
        self._charge(tx.sender, tx.gas_limit)  # no refund for MPC transactions
        parties = out.parties if out.parties is not None else tuple(self.default_committee)
        t = self.committee_threshold(len(parties))
        self.txmgr.enter_mpc(c, h, out.cid, out.params, parties, t)
        self.saved_mpc[c] = SavedMpcState(out.result_slot, h, vm.snapshot(ctx), c, tx.sender, tx.value,
                                          self.txmgr.sessions[h].invocation_count, out.cid, out.params)
        self.lock_index[h] = c
        receipt = Receipt(h, tx.kind, tx.sender, "suspended", tx.gas_limit,
                          events=[{"event": "MpcStarted", "session": h, "contract": c, "cid": out.cid}])
        self._suspended_by[h] = receipt
        self.session_outcomes[h] = {"contract": c, "sender": tx.sender, "outcome": "pending",
                                    "suspended_at": self.height + 1}
        return receipt

    def committee_threshold(self, n: int) -> int:
        if self.default_t is not None and n >= 3 * self.default_t + 1:
            return self.default_t
        return max(0, (n - 1) // 3)

    def _session_for(self, tx) -> MPCInfo:
        info = self.txmgr.sessions.get(tx.session)
        if info is None:
            raise UnknownSession(tx.session)
        return info

    def apply_mpc_message(self, tx: MpcMessageTx, h: str) -> Receipt:
        sender = self.accounts[tx.sender]
        sender.nonce += 1
        receipt = Receipt(h, tx.kind, tx.sender, "success", 0)
        self._cur_receipt = receipt
        try:
            idx = self._session_for(tx).index_of(tx.sender)
            if any(m.sender != idx or m.session != tx.session for m in tx.msgs):
                raise NotCommitteeMember("message sender does not match the transaction sender")
            for m in tx.msgs:
                self.txmgr.route(tx.sender, m)
        except TxMgrError as e:
            receipt.status, receipt.cause = "reverted", type(e).__name__
        finally:
            self._cur_receipt = None
        return receipt

    def apply_mpc_ret(self, tx: MpcRetTx, h: str) -> Receipt:
        sender = self.accounts[tx.sender]
        sender.nonce += 1
        receipt = Receipt(h, tx.kind, tx.sender, "success", 0)
        self._cur_receipt = receipt
        try:
            if tx.ret.sender != self._session_for(tx).index_of(tx.sender) or tx.ret.session != tx.session:
                raise NotCommitteeMember("attestation sender does not match the transaction sender")
            self.txmgr.route(tx.sender, tx.ret)
        except TxMgrError as e:
            receipt.status, receipt.cause = "reverted", type(e).__name__
        finally:
            self._cur_receipt = None
        return receipt

    # ---- serial replay support

    def apply_stub(self, tx, gas: int = 0, debit_value: bool = False):
        """Keep only a transaction's bookkeeping: nonce, fee, optionally its value debit."""
        a = self.ensure(tx.sender)
        a.nonce += 1
        if debit_value:
            a.balance -= getattr(tx, "value", 0)
        if gas:
            self._charge(tx.sender, gas)

    def apply_atomic(self, tx: RegularTx, resolver) -> Receipt:
        """Run a transaction whose nonce was already consumed, resolving MPC calls at once."""
        self._cur_tx = h = tx_hash(tx)
        r = self.apply_regular(tx, h, resolver, bump_nonce=False)
        r.height = self.height + 1
        return r

    # ---- MPC interface

    def _finish_hook(self, session: str, invocation: int, result: tuple):
        self.mpc_finish(session, invocation, result)

    def mpc_finish(self, session: str, invocation: int, result: tuple, resolver=None):
        addr = self.lock_index.get(session)
        saved = self.saved_mpc.get(addr) if addr is not None else None
        if saved is None or saved.session != session:
            raise UnknownSavedState(session)
        if invocation < saved.invocation:
            return "stale"
        self.mpc_results[(session, invocation)] = tuple(result)
        host = self._cur_receipt
        env = self._env(resolver)
        # the locked contract is ours again while resuming
        world = vm.WorldView(self.account, {}, self._audit_hook(session))
        out = vm.resume(saved.ctx, result, world, env)
        ctx = out.ctx
        outcome = self.session_outcomes[session]
        outcome.setdefault("results", []).append(list(result))
        if isinstance(out, vm.Suspended):
            info = self.txmgr.enter_mpc(addr, session, out.cid, out.params,
                                        out.parties if out.parties is not None else tuple(self.default_committee),
                                        self.committee_threshold(len(out.parties or self.default_committee)))
            self.saved_mpc[addr] = SavedMpcState(out.result_slot, session, vm.snapshot(ctx), addr, saved.origin,
                                                 saved.value, info.invocation_count, out.cid, out.params)
            if host is not None:
                host.events.append({"event": "MpcReinvoked", "session": session,
                                    "invocation": info.invocation_count})
            return "suspended"
        del self.saved_mpc[addr]
        del self.lock_index[session]
        if isinstance(out, vm.Completed):
            self._apply_delta(ctx.pending_writes)
            status = "success"
            events = ctx.events
        else:
            # resumed execution reverted: drop the contract's writes, return the value
            if saved.value:
                self.ensure(saved.origin).balance += saved.value
            status, events = "reverted_at_resume", []
        self.txmgr.mark_finished(session, result)
        outcome.update({"outcome": status, "finished_at": self.height + 1,
                        "cause": getattr(out, "cause", None)})
        if host is not None:
            host.events.append({"event": "MpcFinished", "session": session, "status": status,
                                "result": list(result)})
            host.events.extend(events)
        return status

    # ---- blocks

    def commit_block(self, txs: Sequence, resolver=None):
        """Apply ``txs`` in order, advance the height, and release MPC events."""
        receipts = [self.apply(tx, resolver) for tx in txs]
        self.height += 1
        self.blocks.append((self.height, list(txs), receipts))
        events, self.txmgr.events = self.txmgr.events, []
        return receipts, events

    def receipts_jsonl(self) -> str:
        lines = []
        for _, _, rs in self.blocks:
            lines.extend(json.dumps(r.to_json(), sort_keys=True) for r in rs)
        return "\n".join(lines) + ("\n" if lines else "")
