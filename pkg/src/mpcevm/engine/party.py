"""Per-party executor.

A ``PartySession`` is a deterministic state machine.  It is advanced by the
simulator through three entry points, each returning the outgoing actions:

* ``start(height)`` once the session-start event is final,
* ``on_p2p(msg)`` for a share delivered point to point,
* ``on_block(height, msgs, approvals)`` with the session's broadcasts and gate
  approvals committed in a block, in chain order.

Outgoing actions are ``("p2p", to, msg)``, ``("bcast", msg)`` and ``("ret", msg)``.
"""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional, Sequence

from .. import commit as cm
from .. import sss
from ..circuit import Circuit
from ..field import DEFAULT_BIT_WIDTH, PrimeField, lagrange_coefficients, lagrange_interpolate
from .messages import Kind, MpcMessage, success_result
from .plan import (LinPub, OpAffine, OpConst, OpDerive, OpInput, OpMult, OpOpen, OpOutput,
                   OpRandom, Plan, PlanError, build_plan, derive)


class EngineError(RuntimeError):
    pass


class ShapeMismatch(EngineError, ValueError):
    pass


class StalledGate(EngineError):
    pass


class FaultBehavior(str, enum.Enum):
    INCONSISTENT_DEALING = "INCONSISTENT_DEALING"
    CORRUPT_OPENING = "CORRUPT_OPENING"
    FORGE_ATTESTATION = "FORGE_ATTESTATION"
    SILENT = "SILENT"


# Where in the protocol each behavior can switch on.
ACTIVATION_POINTS = {
    FaultBehavior.INCONSISTENT_DEALING: ("input", "random", "reshare"),
    FaultBehavior.CORRUPT_OPENING: ("open", "output"),
    FaultBehavior.FORGE_ATTESTATION: ("attest",),
    FaultBehavior.SILENT: ("start", "reshare", "open", "attest"),
}


@dataclass(frozen=True)
class FaultSpec:
    party: int  # committee index, 0-based
    behavior: FaultBehavior
    activation: Optional[str] = None

    def __post_init__(self):
        b = FaultBehavior(self.behavior)
        object.__setattr__(self, "behavior", b)
        if self.activation is None:
            object.__setattr__(self, "activation", ACTIVATION_POINTS[b][0])
        elif self.activation not in ACTIVATION_POINTS[b]:
            raise ValueError(f"{b.value} has no activation point {self.activation!r}")


@dataclass(frozen=True)
class SessionConfig:
    session: str
    invocation: int
    circuit: Circuit
    public_inputs: tuple
    n: int
    t: int
    plan: Plan
    field: PrimeField
    params: cm.CommitmentParams
    bit_width: int = DEFAULT_BIT_WIDTH
    dispute_timeout: int = 2


def make_session_config(session: str, invocation: int, circuit: Circuit, public_inputs: Sequence[int],
                        n: int, t: int, field: Optional[PrimeField] = None,
                        params: Optional[cm.CommitmentParams] = None,
                        bit_width: int = DEFAULT_BIT_WIDTH, dispute_timeout: int = 2) -> SessionConfig:
    field = field or PrimeField()
    params = params or cm.default_params(field.p)
    sss.check_committee(t, n)
    if circuit.n_parties > n:
        raise ShapeMismatch(f"circuit needs {circuit.n_parties} input parties, committee has {n}")
    pub = tuple(int(v) % field.p for v in public_inputs)
    plan = build_plan(circuit, pub, field, bit_width, n)
    return SessionConfig(session, invocation, circuit, pub, n, t, plan, field, params,
                         bit_width, dispute_timeout)


# Commitment vectors are public, so every party derives the same ones; cache them once.

@lru_cache(maxsize=1 << 16)
def _const_vector(value: int, n: int, params) -> tuple:
    return (cm.commit(value, 0, params),) * n


@lru_cache(maxsize=1 << 16)
def _lincomb_vector(terms: tuple, const: int, n: int, params) -> tuple:
    g = cm.commit(const, 0, params)
    P = params.modulus
    return tuple(cm.linear_combination([(c, v[j]) for c, v in terms], params) * g % P
                 for j in range(n))


@lru_cache(maxsize=1 << 16)
def _product_vector(vectors: tuple, params) -> tuple:
    P = params.modulus
    out = []
    for j in range(len(vectors[0])):
        acc = 1
        for v in vectors:
            acc = acc * v[j] % P
        out.append(acc)
    return tuple(out)


@dataclass
class _DealingState:
    share: Optional[tuple] = None
    vector: Optional[tuple] = None
    commit_height: Optional[int] = None
    ok: bool = False
    bad: bool = False
    disputed: bool = False


@dataclass
class _Dispute:
    height: int
    resolved: bool = False


class PartySession:
    def __init__(self, cfg: SessionConfig, index: int, secret_inputs: Sequence[int],
                 rng: random.Random, fault: Optional[FaultSpec] = None):
        c = cfg.circuit
        expected = c.secret_input_shape[index] if index < c.n_parties else 0
        if len(secret_inputs) != expected:
            raise ShapeMismatch(f"party {index} has {len(secret_inputs)} inputs, circuit wants {expected}")
        self.cfg = cfg
        self.index = index
        self.n, self.t = cfg.n, cfg.t
        self.F = cfg.field
        self.params = cfg.params
        self.inputs = [cfg.field.check_input(int(v), cfg.bit_width) for v in secret_inputs]
        self.rng = rng
        self.fault = fault if fault is not None and fault.party == index else None
        self.ops = cfg.plan.ops
        self.done = [False] * len(self.ops)
        self.missing = [len(w) for w in cfg.plan.waits_on]
        self.remaining = len(self.ops)
        # ops whose inputs are all available but which still wait on the network
        self.waiting = {i for i, m in enumerate(self.missing) if m == 0}
        # ops parked until an external event: ("approve"|"deal"|"open", op id)
        self.parked = {}
        self._block = None
        self.share = {}
        self.vec = {}
        self.pub = {}
        self.outputs = {}
        self.dealings = {}
        self.sent = {}
        self.expected = {}
        self.disputes = {}
        self.approvals = {}
        self.ready_sent = set()
        self.gate_done_sent = set()
        self.open_sent = set()
        self.openings = {}
        self.accused = set()
        self.attested = False
        self.silenced = False
        self.height = 0
        self.log = []
        self._out = []

    # ---- plumbing

    def _msg(self, kind, payload) -> MpcMessage:
        return MpcMessage(self.cfg.session, self.cfg.invocation, kind, self.index, payload)

    def _bcast(self, kind, payload):
        if not self.silenced:
            self._out.append(("bcast", self._msg(kind, payload)))

    def _p2p(self, to, kind, payload):
        if not self.silenced:
            self._out.append(("p2p", to, self._msg(kind, payload)))

    def _drain(self) -> list:
        out, self._out = self._out, []
        return out

    def _faulty(self, behavior, point) -> bool:
        f = self.fault
        return f is not None and f.behavior is behavior and f.activation == point

    def _maybe_fall_silent(self, point):
        if self._faulty(FaultBehavior.SILENT, point):
            self.silenced = True

    def _wait_for(self, what: str, op_id: int) -> bool:
        self._block = (what, op_id)
        return False

    def _wake(self, what: str, op_id: int):
        ops = self.parked.pop((what, op_id), None)
        if ops:
            self.waiting.update(ops)

    def _dealing(self, key) -> _DealingState:
        st = self.dealings.get(key)
        if st is None:
            st = self.dealings[key] = _DealingState()
        return st

    def _expect(self, key, since):
        if key[1] != self.index and key not in self.expected and not self._dealing(key).ok:
            self.expected[key] = since

    def accuse(self, party: int):
        if party != self.index and party not in self.accused:
            self.accused.add(party)
            self.log.append(("accuse", party))
            self._bcast(Kind.ACCUSE, (party,))

    # ---- entry points

    def start(self, height: int) -> list:
        self.height = height
        self._maybe_fall_silent("start")
        for op in self.ops:
            if isinstance(op, OpInput):
                self._expect((op.id, op.owner), height)
                if op.owner == self.index:
                    self._deal(op.id, self.inputs[op.slot], "input")
            elif isinstance(op, OpRandom):
                for d in range(self.n):
                    self._expect((op.id, d), height)
                secret = self.rng.randrange(op.bound) if op.bound else self.F.random(self.rng)
                self._deal(op.id, secret, "random")
        self._progress()
        return self._drain()

    def on_p2p(self, msg: MpcMessage) -> list:
        if msg.kind is not Kind.SHARE:
            return []
        op, v, r = msg.payload
        st = self._dealing((op, msg.sender))
        if st.share is None and not st.ok:
            st.share = (v % self.F.p, r % self.F.p)
            if self._check_dealing((op, msg.sender)):
                self._progress()
        return self._drain()

    def on_block(self, height: int, msgs: Sequence[MpcMessage] = (), approvals: Sequence[tuple] = ()) -> list:
        self.height = height
        for op, dealers in approvals:
            if op not in self.approvals:
                self.approvals[op] = tuple(dealers)
                self._wake("approve", op)
                for d in dealers:
                    self._expect((op, d), height)
        for m in msgs:
            self._ingest(m, height)
        self._check_deadlines(height)
        self._progress()
        return self._drain()

    # ---- dealing and disputes

    def _deal(self, op_id: int, secret: int, point: str):
        if point == "reshare":
            self._maybe_fall_silent("reshare")
        d = sss.deal(secret, self.t, self.n, self.rng, self.F, self.params)
        sent = [(s.value, s.randomness_value) for s in d.shares]
        if self._faulty(FaultBehavior.INCONSISTENT_DEALING, point):
            p = self.F.p
            sent = [((v + 1) % p, r) if j != self.index else (v, r) for j, (v, r) in enumerate(sent)]
        self.sent[op_id] = sent
        for j in range(self.n):
            if j != self.index:
                self._p2p(j, Kind.SHARE, (op_id,) + sent[j])
        self._bcast(Kind.COMMIT, (op_id, d.commitments))
        st = self._dealing((op_id, self.index))
        st.share, st.vector, st.ok = sent[self.index], d.commitments, True

    def _check_dealing(self, key) -> bool:
        st = self.dealings[key]
        if st.ok or st.bad or st.vector is None or st.share is None:
            return False
        if cm.verify_opening(st.vector[self.index], st.share[0], st.share[1], self.params):
            st.ok = True
            self.expected.pop(key, None)
            self._wake("deal", key[0])
            return True
        self._dispute(key)
        return False

    def _dispute(self, key):
        st = self.dealings[key]
        if not st.disputed:
            st.disputed = True
            self.log.append(("dispute", key))
            self._bcast(Kind.DISPUTE, key)

    def _ingest(self, m: MpcMessage, height: int):
        k = m.kind
        if k is Kind.COMMIT:
            op, vector = m.payload
            st = self._dealing((op, m.sender))
            if st.vector is not None or st.bad:
                return
            vector = tuple(vector)
            if len(vector) != self.n or not cm.is_low_degree(vector, self.t, self.params):
                st.bad = True
                self.accuse(m.sender)
                return
            st.vector, st.commit_height = vector, height
            self._check_dealing((op, m.sender))
        elif k is Kind.DISPUTE:
            op, dealer = m.payload
            st = self.dealings.get((op, dealer))
            if dealer == m.sender or st is None or st.vector is None:
                return  # nothing committed to dispute
            key = (op, dealer, m.sender)
            if key in self.disputes:
                return
            self.disputes[key] = _Dispute(height)
            if dealer == self.index and op in self.sent:
                v, r = self.sent[op][m.sender]
                self._bcast(Kind.DISPUTE_OPENING, (op, m.sender, v, r))
        elif k is Kind.DISPUTE_OPENING:
            op, disputer, v, r = m.payload
            rec = self.disputes.get((op, m.sender, disputer))
            if rec is None or rec.resolved:
                return
            self.handle_dispute(op, m.sender, disputer, (v, r))
        elif k is Kind.OPEN_SHARE:
            op, v, r = m.payload
            lst = self.openings.setdefault(op, [])
            if all(s != m.sender for s, _, _ in lst):
                lst.append((m.sender, v % self.F.p, r % self.F.p))
                self._wake("open", op)

    def handle_dispute(self, op: int, dealer: int, disputer: int, opening) -> sss.DisputeVerdict:
        """Judge a dispute over the share ``dealer`` sent ``disputer`` for ``op``."""
        rec = self.disputes.setdefault((op, dealer, disputer), _Dispute(self.height))
        rec.resolved = True
        st = self.dealings.get((op, dealer))
        vectors = {op: st.vector} if st is not None and st.vector is not None else {}
        record = sss.DisputeRecord(dealer + 1, op, disputer + 1, opening)
        verdict = sss.open_dispute(record, vectors, self.params)
        if verdict is sss.DisputeVerdict.CHEATER:
            self.accuse(dealer)
        elif disputer == self.index:
            st.share, st.ok = opening, True
            self.expected.pop((op, dealer), None)
            self._wake("deal", op)
        return verdict

    def _check_deadlines(self, h: int):
        T = self.cfg.dispute_timeout
        for key, since in list(self.expected.items()):
            st = self._dealing(key)
            if st.ok:
                del self.expected[key]
            elif st.bad:
                continue
            elif st.vector is None:
                if h >= since + T:
                    self.accuse(key[1])
            elif st.share is None and not st.disputed and h >= st.commit_height + T:
                self._dispute(key)
        for (op, dealer, disputer), rec in self.disputes.items():
            if not rec.resolved and h >= rec.height + T:
                self.handle_dispute(op, dealer, disputer, sss.NO_RESPONSE)

    # ---- gate evaluation

    def _coef(self, c) -> int:
        if isinstance(c, LinPub):
            return (c.scale * self.pub[c.name] + c.offset) % self.F.p
        return c

    def _progress(self):
        """Try every op whose inputs are available, lowest id first, waking dependents."""
        heap = sorted(self.waiting)
        dependents = self.cfg.plan.dependents
        while heap:
            i = heapq.heappop(heap)
            if i not in self.waiting:
                continue
            self._block = None
            if not self._try(self.ops[i]):
                if self._block is not None:
                    self.waiting.discard(i)
                    self.parked.setdefault(self._block, set()).add(i)
                continue
            self.done[i] = True
            self.remaining -= 1
            self.waiting.discard(i)
            for j in dependents[i]:
                self.missing[j] -= 1
                if self.missing[j] == 0:
                    self.waiting.add(j)
                    heapq.heappush(heap, j)
        if not self.remaining and not self.attested:
            self.finalize_result()

    def _finish(self, op, share, vector):
        self.share[op.id] = share
        self.vec[op.id] = vector

    def _try(self, op) -> bool:
        p, n = self.F.p, self.n
        if isinstance(op, OpConst):
            self._finish(op, (op.value, 0), _const_vector(op.value, n, self.params))
        elif isinstance(op, OpInput):
            st = self.dealings.get((op.id, op.owner))
            if st is None or not st.ok:
                return self._wait_for("deal", op.id)
            self._finish(op, st.share, st.vector)
        elif isinstance(op, OpRandom):
            sts = [self.dealings.get((op.id, d)) for d in range(n)]
            if not all(st is not None and st.ok for st in sts):
                return self._wait_for("deal", op.id)
            v = sum(st.share[0] for st in sts) % p
            r = sum(st.share[1] for st in sts) % p
            self._finish(op, (v, r), _product_vector(tuple(st.vector for st in sts), self.params))
        elif isinstance(op, OpAffine):
            self.eval_affine(op)
        elif isinstance(op, OpMult):
            return self.eval_mult(op)
        elif isinstance(op, (OpOpen, OpOutput)):
            return self.open_output(op)
        elif isinstance(op, OpDerive):
            try:
                vals = derive(op.fn, [self.pub[nm] for nm in op.inputs], op.arg, self.F)
            except PlanError as e:
                raise StalledGate(f"op {op.id}: {e}") from e
            self.pub.update(zip(op.outputs, vals))
        return True

    def eval_affine(self, op: OpAffine):
        """Linear gates: ADD, MULT_BY_CONST and the comparison's public-coefficient sums."""
        p = self.F.p
        coefs = [self._coef(c) for c, _ in op.terms]
        const = self._coef(op.const)
        v = (sum(c * self.share[w][0] for c, (_, w) in zip(coefs, op.terms)) + const) % p
        r = sum(c * self.share[w][1] for c, (_, w) in zip(coefs, op.terms)) % p
        terms = tuple((c, self.vec[w]) for c, (_, w) in zip(coefs, op.terms) if c)
        self._finish(op, (v, r), _lincomb_vector(terms, const, self.n, self.params))

    def eval_mult(self, op: OpMult) -> bool:
        if op.id not in self.ready_sent:
            self.ready_sent.add(op.id)
            self._bcast(Kind.READY, (op.id,))
        dealers = self.approvals.get(op.id)
        if dealers is None:
            return self._wait_for("approve", op.id)
        if self.index in dealers and op.id not in self.sent:
            h = self.share[op.a][0] * self.share[op.b][0] % self.F.p
            self._deal(op.id, h, "reshare")
        sts = [self.dealings.get((op.id, d)) for d in dealers]
        if not all(st is not None and st.ok for st in sts):
            return self._wait_for("deal", op.id)
        p = self.F.p
        lam = lagrange_coefficients([d + 1 for d in dealers], 0, self.F)
        v = sum(l * st.share[0] for l, st in zip(lam, sts)) % p
        r = sum(l * st.share[1] for l, st in zip(lam, sts)) % p
        vec = _lincomb_vector(tuple(zip(lam, (st.vector for st in sts))), 0, self.n, self.params)
        self._finish(op, (v, r), vec)
        if op.id not in self.gate_done_sent:
            self.gate_done_sent.add(op.id)
            self._bcast(Kind.GATE_DONE, (op.id,))
        return True

    def open_output(self, op) -> bool:
        is_output = isinstance(op, OpOutput)
        if op.id not in self.open_sent:
            self.open_sent.add(op.id)
            point = "output" if is_output else "open"
            self._maybe_fall_silent("open")
            v, r = self.share[op.wire]
            if self._faulty(FaultBehavior.CORRUPT_OPENING, point):
                v = (v + 1) % self.F.p
            self._bcast(Kind.OPEN_SHARE, (op.id, v, r))
            # our own opening counts without waiting for the chain
            self.openings.setdefault(op.id, [])
        vector = self.vec[op.wire]
        valid = {self.index: self.share[op.wire][0]}
        for sender, v, r in self.openings.get(op.id, ()):
            if sender == self.index:
                continue
            if cm.verify_opening(vector[sender], v, r, self.params):
                valid[sender] = v
            else:
                self.accuse(sender)
        if len(valid) < 2 * self.t + 1:
            return self._wait_for("open", op.id)
        xs = sorted(valid)[: self.t + 1]
        value = lagrange_interpolate([(x + 1, valid[x]) for x in xs], 0, self.F)
        if is_output:
            self.outputs[op.slot] = value
        else:
            self.pub[op.name] = value
        return True

    def finalize_result(self):
        self.attested = True
        result = list(success_result(self.outputs[s] for s in range(self.cfg.plan.output_count)))
        if self._faulty(FaultBehavior.SILENT, "attest") or self.silenced:
            return
        if self._faulty(FaultBehavior.FORGE_ATTESTATION, "attest"):
            if self.cfg.plan.output_count:
                result[0] = (result[0] + 1) % self.F.p
            else:
                result[-1] = 1
        self._out.append(("ret", self._msg(Kind.RESULT_ATTEST, tuple(result))))

    # ---- inspection

    def stalled_gates(self) -> list:
        parked = set().union(*self.parked.values()) if self.parked else set()
        return sorted(i for i in self.waiting | parked if isinstance(self.ops[i], OpMult))


def init_session(cfg: SessionConfig, index: int, secret_inputs: Sequence[int], rng: random.Random,
                 fault: Optional[FaultSpec] = None, height: int = 0):
    """Create a party's state and its initial dealings."""
    party = PartySession(cfg, index, secret_inputs, rng, fault)
    return party, party.start(height)
