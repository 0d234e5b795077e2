"""Built-in MPC transaction manager.

Tracks every session by the hash of the transaction that entered MPC, counts
readiness / completion / accusation / result votes, and runs the global FIFO
queue that bounds how many multiplication gates are in flight.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .circuit import CircuitRegistry, UnknownCircuit
from .engine.messages import Kind, MpcMessage, cheater_result, result_hash

MPCMGR_ADDRESS = "0x" + "00" * 19 + "4d"


class TxMgrError(Exception):
    pass


class NotCommitteeMember(TxMgrError):
    pass


class NotEOA(TxMgrError):
    pass


class UnknownSession(TxMgrError):
    pass


class Status(str, enum.Enum):
    ACTIVE = "ACTIVE"
    RESUMABLE = "RESUMABLE"
    FINISHED = "FINISHED"


@dataclass
class MPCInfo:
    tx_hash: str
    contract: str
    cid: int
    params: tuple
    parties: tuple
    t: int
    output_count: int
    accusations: dict = field(default_factory=dict)
    gate_ready: dict = field(default_factory=dict)
    gate_done: dict = field(default_factory=dict)
    result_attest: dict = field(default_factory=dict)
    invocation_count: int = 0
    status: Status = Status.ACTIVE
    final_result: Optional[tuple] = None
    cheater: Optional[int] = None

    def index_of(self, addr: str) -> int:
        try:
            return self.parties.index(addr)
        except ValueError:
            raise NotCommitteeMember(addr) from None

    def summary(self) -> dict:
        return {"tx_hash": self.tx_hash, "contract": self.contract, "cid": self.cid,
                "params": list(self.params), "parties": list(self.parties), "t": self.t,
                "invocations": self.invocation_count, "status": self.status.value,
                "result": None if self.final_result is None else list(self.final_result),
                "cheater": self.cheater}


class MultGateQueue:
    """Global FIFO of ready multiplication gates with at most ``cap`` running."""

    def __init__(self, cap: int = 4):
        if cap < 1:
            raise ValueError("max_parallel_mults must be >= 1")
        self.cap = cap
        self.queue = deque()
        self.running = []
        self.log = []

    def _admit(self) -> list:
        admitted = []
        while self.queue and len(self.running) < self.cap:
            e = self.queue.popleft()
            self.running.append(e)
            admitted.append(e)
            self.log.append({"op": "admit", "gate": list(e), "running": len(self.running)})
        return admitted

    def enqueue(self, entry, votes: int = 0) -> list:
        self.queue.append(entry)
        self.log.append({"op": "enqueue", "gate": list(entry), "votes": votes,
                         "queued": len(self.queue)})
        return self._admit()

    def retire(self, entry, votes: int = 0) -> list:
        if entry not in self.running:
            return []
        self.running.remove(entry)
        self.log.append({"op": "retire", "gate": list(entry), "votes": votes,
                         "running": len(self.running)})
        return self._admit()

    def purge(self, session: str) -> list:
        dropped = [e for e in self.queue if e[0] == session]
        stopped = [e for e in self.running if e[0] == session]
        if not dropped and not stopped:
            return []
        self.queue = deque(e for e in self.queue if e[0] != session)
        self.running = [e for e in self.running if e[0] != session]
        self.log.append({"op": "purge", "session": session, "queued": [list(e) for e in dropped],
                         "running_dropped": [list(e) for e in stopped], "running": len(self.running)})
        return self._admit()


class TxManager:
    """State of the manager contract plus the internal start/finish interface.

    ``finish_hook(tx_hash, invocation, result)`` is installed by the ledger and
    performs the resume.  Events for the simulator accumulate in ``events`` and are
    released by the ledger only when the enclosing block commits.
    """

    address = MPCMGR_ADDRESS

    def __init__(self, registry: CircuitRegistry, max_parallel_mults: int = 4,
                 finish_hook: Optional[Callable] = None):
        self.registry = registry
        self.sessions = {}
        self.queue = MultGateQueue(max_parallel_mults)
        self.finish_hook = finish_hook
        self.events = []

    # ---- session lifecycle

    def enter_mpc(self, contract: str, tx_hash: str, cid: int, params, parties, t: int) -> MPCInfo:
        if cid not in self.registry:
            raise UnknownCircuit(cid)
        info = self.sessions.get(tx_hash)
        if info is None or info.status is Status.FINISHED:
            c = self.registry.get(cid)
            info = MPCInfo(tx_hash, contract, cid, tuple(params), tuple(parties), t, c.output_count)
            self.sessions[tx_hash] = info
        else:
            # re-invocation inside a resumed transaction: only bookkeeping changes
            info.invocation_count += 1
            info.cid, info.params, info.parties, info.t = cid, tuple(params), tuple(parties), t
            info.output_count = self.registry.get(cid).output_count
            info.status = Status.ACTIVE
        self.events.append(("start", tx_hash, info.invocation_count))
        return info

    def mark_finished(self, tx_hash: str, result=None):
        info = self.sessions[tx_hash]
        info.status = Status.FINISHED
        if result is not None:
            info.final_result = tuple(result)
        self._release(self.queue.purge(tx_hash))
        self.events.append(("finish", tx_hash, info.invocation_count))

    def live_sessions(self) -> list:
        return [h for h, i in self.sessions.items() if i.status is not Status.FINISHED]

    def _session(self, tx_hash) -> MPCInfo:
        info = self.sessions.get(tx_hash)
        if info is None:
            raise UnknownSession(tx_hash)
        return info

    def _release(self, admitted):
        for session, inv, gate in admitted:
            info = self.sessions[session]
            dealers = tuple(sorted(info.gate_ready[(inv, gate)][: 2 * info.t + 1]))
            self.events.append(("approve", session, inv, gate, dealers))

    # ---- broadcast entry points (all require an EOA committee member)

    def route(self, sender: str, msg: MpcMessage, is_eoa: bool = True):
        """Dispatch one committee broadcast.  Returns the sender's committee index."""
        if not is_eoa:
            raise NotEOA(sender)
        info = self._session(msg.session)
        idx = info.index_of(sender)
        if info.status is Status.FINISHED or msg.invocation != info.invocation_count:
            return idx
        if msg.kind is Kind.READY:
            self.broadcast_ready(info, idx, msg.payload[0])
        elif msg.kind is Kind.GATE_DONE:
            self.attest_gate_done(info, idx, msg.payload[0])
        elif msg.kind is Kind.ACCUSE:
            self.declare_cheater(info, idx, msg.payload[0])
        elif msg.kind is Kind.RESULT_ATTEST:
            self.attest_result(info, idx, tuple(msg.payload))
        return idx

    def broadcast_ready(self, info: MPCInfo, idx: int, gate: int):
        voters = info.gate_ready.setdefault((info.invocation_count, gate), [])
        if idx in voters:
            return
        voters.append(idx)
        if len(voters) == 2 * info.t + 1:
            entry = (info.tx_hash, info.invocation_count, gate)
            self._release(self.queue.enqueue(entry, len(voters)))

    def attest_gate_done(self, info: MPCInfo, idx: int, gate: int):
        done = info.gate_done.setdefault((info.invocation_count, gate), [])
        if idx in done:
            return
        done.append(idx)
        if len(done) == 2 * info.t + 1:
            self._release(self.queue.retire((info.tx_hash, info.invocation_count, gate), len(done)))

    def declare_cheater(self, info: MPCInfo, idx: int, accused: int):
        if not 0 <= accused < len(info.parties):
            raise NotCommitteeMember(accused)
        accusers = info.accusations.setdefault(accused, [])
        if idx in accusers:
            return
        accusers.append(idx)
        if len(accusers) == info.t + 1:
            info.cheater = accused
            self._release(self.queue.purge(info.tx_hash))
            self.mpc_finish(info, cheater_result(info.output_count, accused))

    def attest_result(self, info: MPCInfo, idx: int, result: tuple):
        h = result_hash(result)
        entry = info.result_attest.setdefault((info.invocation_count, h), [[], result])
        if idx in entry[0]:
            return
        entry[0].append(idx)
        if len(entry[0]) == info.t + 1:
            self.mpc_finish(info, result)

    def mpc_finish(self, info: MPCInfo, result: tuple):
        info.status = Status.RESUMABLE
        info.final_result = tuple(result)
        if self.finish_hook is not None:
            self.finish_hook(info.tx_hash, info.invocation_count, tuple(result))
