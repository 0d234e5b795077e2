"""Deterministic discrete-event simulator around a ledger.

Three event kinds drive everything: point-to-point share delivery, block
production on a fixed clock, and fault injection.  Broadcast-class engine
messages never travel directly; they wait in a per-party outbox and enter the
next block as ``MpcMessageTx`` / ``MpcRetTx``.  Events at the same tick run in
scheduling order, so a run is a pure function of its inputs and seed.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .engine.messages import Kind
from .engine.party import FaultSpec, PartySession, make_session_config
from .ledger import CreateTx, Ledger, MpcMessageTx, MpcRetTx, RegularTx
from .txmgr import Status


class SimError(RuntimeError):
    pass


class LivelockGuard(SimError):
    pass


class TooManyFaults(SimError, ValueError):
    pass


@dataclass
class TxIntent:
    """A transaction without a nonce; the nonce is fixed when a block picks it."""
    kind: str  # "create" | "regular"
    sender: str
    target: Optional[str] = None
    method: Optional[str] = None
    args: tuple = ()
    value: int = 0
    gas_limit: int = 100_000
    fixture: Optional[str] = None
    name: Optional[str] = None


@dataclass
class SessionRun:
    session: str
    invocation: int
    parties: list  # PartySession per committee index
    addresses: tuple
    started: int
    last_activity: int


@dataclass
class BlockStats:
    height: int
    tick: int
    mpc_txs: int
    regular: int
    regular_committed: int
    live_sessions: int


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return x


class Simulation:
    def __init__(self, ledger: Ledger, committee: Sequence[str], t: int, seed: int = 0,
                 latency=1, block_interval: int = 10, block_capacity: int = 200,
                 inputs_for: Optional[Callable] = None, dispute_timeout: int = 2,
                 sync_mode: bool = False, stall_blocks: int = 200,
                 stream: Optional[Callable] = None, trace_p2p: bool = True):
        if block_interval < 1:
            raise ValueError("block_interval must be positive")
        self.ledger = ledger
        self.committee = tuple(committee)
        self.t = t
        self.seed = seed
        self.latency = latency
        self.block_interval = block_interval
        self.block_capacity = block_capacity
        self.inputs_for = inputs_for or (lambda info, idx, circuit: [])
        self.dispute_timeout = dispute_timeout
        self.sync_mode = sync_mode
        self.stall_blocks = stall_blocks
        self.stream = stream
        self.trace_p2p = trace_p2p

        self.tick = 0
        self._seq = itertools.count()
        self._events = []
        self.faults = {}  # committee address -> FaultSpec
        self.sessions = {}  # (session, invocation) -> SessionRun
        self.outbox = {}  # address -> {session: [msgs]}
        self.retbox = {}  # address -> [msgs]
        self.pending = []  # scheduled TxIntents, FIFO
        self.trace = []
        self.stats = []
        self.receipts_by_name = {}
        self.block_hooks = []
        self._queue_seen = 0

    # ---- scheduling

    def schedule(self, tick: int, kind: str, payload=None):
        if tick < self.tick:
            raise SimError(f"cannot schedule in the past ({tick} < {self.tick})")
        heapq.heappush(self._events, (tick, next(self._seq), kind, payload))

    def start_clock(self):
        self.schedule(self.tick + self.block_interval, "block")

    def inject(self, fault: FaultSpec, at: Optional[int] = None):
        if at is None:
            self._apply_fault(fault)
        else:
            self.schedule(at, "fault", fault)

    def _apply_fault(self, fault: FaultSpec):
        if not 0 <= fault.party < len(self.committee):
            raise SimError(f"no committee member {fault.party}")
        addr = self.committee[fault.party]
        faults = dict(self.faults)
        faults[addr] = fault
        if len(faults) > self.t:
            raise TooManyFaults(f"{len(faults)} faulty parties exceed t={self.t}")
        self.faults = faults
        self._log({"event": "fault", "party": fault.party, "behavior": fault.behavior.value,
                   "activation": fault.activation})
        for run in self.sessions.values():
            if addr in run.addresses:
                idx = run.addresses.index(addr)
                run.parties[idx].fault = FaultSpec(idx, fault.behavior, fault.activation)

    def submit(self, intent: TxIntent):
        self.pending.append(intent)

    def _log(self, rec: dict):
        rec = {"tick": self.tick, **rec}
        self.trace.append(_jsonable(rec))

    def link_latency(self, src: int, dst: int) -> int:
        lat = self.latency
        if callable(lat):
            return int(lat(src, dst))
        if isinstance(lat, dict):
            return int(lat.get((src, dst), lat.get("default", 1)))
        return int(lat)

    # ---- main loop

    def run_until(self, predicate: Callable = lambda sim: False, max_ticks: int = 1_000_000) -> list:
        """Process events until ``predicate(sim)`` holds, the queue empties, or the budget runs out."""
        limit = self.tick + max_ticks
        while self._events and not predicate(self):
            tick, _, kind, payload = heapq.heappop(self._events)
            if tick > limit:
                heapq.heappush(self._events, (tick, next(self._seq), kind, payload))
                break
            self.tick = tick
            if kind == "p2p":
                self._deliver(*payload)
            elif kind == "block":
                self._produce_block()
                self.schedule(self.tick + self.block_interval, "block")
            elif kind == "fault":
                self._apply_fault(payload)
            else:
                raise SimError(f"unknown event kind {kind}")
        return self.trace

    def run_blocks(self, count: int) -> list:
        target = self.ledger.height + count
        if not any(k == "block" for _, _, k, _ in self._events):
            self.start_clock()
        return self.run_until(lambda sim: sim.ledger.height >= target)

    def idle(self) -> bool:
        return not self.sessions and not self.pending and not self.ledger.txmgr.live_sessions()

    # ---- party plumbing

    def _absorb(self, run: SessionRun, idx: int, actions):
        addr = run.addresses[idx]
        for a in actions:
            if a[0] == "p2p":
                _, to, msg = a
                self.schedule(self.tick + self.link_latency(idx, to), "p2p", (run.session, run.invocation, to, msg))
            elif a[0] == "bcast":
                self.outbox.setdefault(addr, {}).setdefault(run.session, []).append(a[1])
            else:
                self.retbox.setdefault(addr, []).append(a[1])

    def _deliver(self, session, invocation, to, msg):
        run = self.sessions.get((session, invocation))
        if self.trace_p2p:
            self.trace.append({"tick": self.tick, "event": "p2p", "session": session[:10], "inv": invocation,
                               "from": msg.sender, "to": to, "op": msg.payload[0], "dropped": run is None})
        if run is None:
            return
        run.last_activity = self.ledger.height
        self._absorb(run, to, run.parties[to].on_p2p(msg))

    def _spawn(self, session: str, invocation: int):
        info = self.ledger.txmgr.sessions[session]
        for key in [k for k in self.sessions if k[0] == session]:
            self._retire(*key)
        circuit = self.ledger.registry.get(info.cid)
        cfg = make_session_config(session, invocation, circuit, info.params, len(info.parties), info.t,
                                  dispute_timeout=self.dispute_timeout)
        parties = []
        for idx, addr in enumerate(info.parties):
            f = self.faults.get(addr)
            fault = FaultSpec(idx, f.behavior, f.activation) if f is not None else None
            rng = random.Random(f"{self.seed}/{session}/{invocation}/{idx}")
            inputs = self.inputs_for(info, idx, circuit) if idx < circuit.n_parties else []
            parties.append(PartySession(cfg, idx, inputs, rng, fault))
        run = SessionRun(session, invocation, parties, tuple(info.parties), self.ledger.height,
                         self.ledger.height)
        self.sessions[(session, invocation)] = run
        self._log({"event": "session_start", "session": session, "inv": invocation, "cid": info.cid,
                   "params": list(info.params), "height": self.ledger.height})
        for idx, p in enumerate(parties):
            self._absorb(run, idx, p.start(self.ledger.height))

    def _retire(self, session: str, invocation: int):
        run = self.sessions.pop((session, invocation), None)
        if run is None:
            return
        for addr in run.addresses:
            box = self.outbox.get(addr)
            if box:
                box.pop(session, None)
            if addr in self.retbox:
                self.retbox[addr] = [m for m in self.retbox[addr] if m.session != session]

    # ---- blocks

    def _next_nonce(self, used: dict, addr: str) -> int:
        a = self.ledger.account(addr)
        n = (a.nonce if a is not None else 0) + used.get(addr, 0)
        used[addr] = used.get(addr, 0) + 1
        return n

    def _materialize(self, it: TxIntent, used: dict):
        nonce = self._next_nonce(used, it.sender)
        if it.kind == "create":
            return CreateTx(it.sender, nonce, it.fixture, tuple(it.args), it.value, it.gas_limit)
        return RegularTx(it.sender, nonce, it.target, it.method, tuple(it.args), it.value, it.gas_limit)

    def _select(self):
        used = {}
        txs, names = [], []
        for addr in self.committee:
            box = self.outbox.pop(addr, {})
            for session, msgs in box.items():
                if msgs:
                    txs.append(MpcMessageTx(addr, self._next_nonce(used, addr), session, tuple(msgs)))
                    names.append(None)
        for addr in self.committee:
            for m in self.retbox.pop(addr, []):
                txs.append(MpcRetTx(addr, self._next_nonce(used, addr), m.session, m))
                names.append(None)
        mpc_count = len(txs)
        if self.sync_mode and self.ledger.txmgr.live_sessions():
            return txs, names, mpc_count
        room = max(0, self.block_capacity - len(txs))
        while self.pending and room:
            it = self.pending.pop(0)
            txs.append(self._materialize(it, used))
            names.append(it.name)
            room -= 1
        if self.stream is not None and room:
            for it in self.stream(room, self.ledger.height + 1):
                txs.append(self._materialize(it, used))
                names.append(it.name)
        return txs, names, mpc_count

    def _produce_block(self):
        txs, names, mpc_count = self._select()
        receipts, events = self.ledger.commit_block(txs)
        h = self.ledger.height
        regular = [r for r in receipts if r.kind in ("regular", "create")]
        committed = sum(1 for r in regular if r.status != "rejected")
        for name, r in zip(names, receipts):
            if name is not None:
                self.receipts_by_name[name] = r
        live = len(self.ledger.txmgr.live_sessions())
        self.stats.append(BlockStats(h, self.tick, mpc_count, len(regular), committed, live))
        self._log({"event": "block", "height": h, "mpc_txs": mpc_count, "regular": len(regular),
                   "regular_committed": committed, "live_sessions": live,
                   "named": {n: r.status for n, r in zip(names, receipts) if n is not None}})
        qlog = self.ledger.txmgr.queue.log
        for entry in qlog[self._queue_seen:]:
            self._log({"event": "queue", "height": h, **entry})
        self._queue_seen = len(qlog)

        # broadcasts that made it on chain, grouped per session
        delivered = {}
        for tx, r in zip(txs, receipts):
            if tx.kind == "mpcmessage" and r.status == "success":
                for m in tx.msgs:
                    delivered.setdefault((m.session, m.invocation), []).append(m)
        approvals, started = {}, []
        for e in events:
            if e[0] == "start":
                started.append((e[1], e[2]))
            elif e[0] == "approve":
                approvals.setdefault((e[1], e[2]), []).append((e[3], e[4]))
            elif e[0] == "finish":
                info = self.ledger.txmgr.sessions[e[1]]
                self._log({"event": "session_finish", "session": e[1], "inv": e[2], "height": h,
                           "result": list(info.final_result or ()), "cheater": info.cheater})
                self._retire(e[1], e[2])
        for key, run in list(self.sessions.items()):
            info = self.ledger.txmgr.sessions.get(run.session)
            if info is None or info.status is Status.FINISHED or info.invocation_count != run.invocation:
                continue
            msgs = delivered.get(key, [])
            appr = approvals.get(key, [])
            if msgs or appr:
                run.last_activity = h
            elif h - run.last_activity > self.stall_blocks:
                raise LivelockGuard(f"session {run.session} made no progress for {self.stall_blocks} blocks")
            for idx, p in enumerate(run.parties):
                self._absorb(run, idx, p.on_block(h, msgs, appr))
        for session, inv in started:
            info = self.ledger.txmgr.sessions[session]
            if info.status is not Status.FINISHED and info.invocation_count == inv:
                self._spawn(session, inv)
        for hook in self.block_hooks:
            hook(self, h, txs, receipts, names)

    # ---- summaries

    def regular_per_block(self) -> list:
        return [s.regular_committed for s in self.stats]

    def trace_jsonl(self) -> str:
        import json
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.trace)


def queue_events(trace: Sequence[dict]) -> list:
    return [r for r in trace if r.get("event") == "queue"]


__all__ = ["Simulation", "TxIntent", "LivelockGuard", "TooManyFaults", "SimError", "BlockStats",
           "queue_events", "Kind"]
