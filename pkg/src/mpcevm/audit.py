"""Serializability audit.

The committed history is replayed on a fresh ledger as a serial schedule:

* each suspended transaction runs atomically at the position of the broadcast
  that completed its session, with the recorded MPC results fed straight in;
* its nonce is still consumed at the original position, so later transactions
  from the same sender keep their nonces;
* transactions that were denied because of a lock keep only their fee and nonce;
* committee broadcasts keep only their nonce.

The audit passes when the replayed account state equals the committed one and
no access to a locked contract slipped through while its session was live.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ledger import Ledger


class _Replay:
    """Feeds recorded results to ``ENTER_MPC`` in invocation order."""

    def __init__(self, results: dict, session: str):
        self.results, self.session, self.calls = results, session, 0

    def __call__(self, ctx, cid, params, parties):
        r = self.results.get((self.session, self.calls))
        self.calls += 1
        return r


@dataclass
class AuditResult:
    committed_hash: str
    serial_hash: str
    locked_accesses: list
    mismatches: list = field(default_factory=list)
    unfinished: list = field(default_factory=list)

    @property
    def serializable(self) -> bool:
        return self.committed_hash == self.serial_hash

    @property
    def ok(self) -> bool:
        return self.serializable and not self.locked_accesses

    def to_json(self) -> dict:
        return {"committed_hash": self.committed_hash, "serial_hash": self.serial_hash,
                "serializable": self.serializable, "locked_accesses": len(self.locked_accesses),
                "replay_mismatches": self.mismatches, "unfinished_sessions": self.unfinished,
                "ok": self.ok}


def denied_by_lock(receipt) -> bool:
    return receipt.status == "reverted" and receipt.cause == "AccessViolation" and "locked" in receipt.detail


def serial_replay(committed: Ledger, fresh: Ledger) -> tuple:
    """Replay ``committed.blocks`` on ``fresh`` (same genesis).  Returns (ledger, mismatches, unfinished)."""
    deferred = {}
    mismatches = []
    for height, txs, receipts in committed.blocks:
        fresh.height = height - 1
        for tx, r in zip(txs, receipts):
            if r.status == "rejected":
                continue
            if tx.kind in ("mpcmessage", "mpcret"):
                fresh.apply_stub(tx)
                for ev in r.events:
                    if ev.get("event") == "MpcFinished" and ev["session"] in deferred:
                        held = deferred.pop(ev["session"])
                        r2 = fresh.apply_atomic(held, _Replay(committed.mpc_results, ev["session"]))
                        want = "success" if ev["status"] == "success" else "reverted"
                        if r2.status != want:
                            mismatches.append({"tx": ev["session"], "committed": ev["status"],
                                               "serial": r2.status})
            elif r.status == "suspended":
                fresh.apply_stub(tx)
                deferred[r.tx_hash] = tx
            elif denied_by_lock(r):
                fresh.apply_stub(tx, r.gas_used)
            else:
                r2 = fresh.apply(tx)
                if r2.status != r.status:
                    mismatches.append({"tx": r.tx_hash, "committed": r.status, "serial": r2.status})
        fresh.height = height
    unfinished = sorted(deferred)
    for h in unfinished:
        # still live at the end: only the part committed at suspension is visible
        tx = deferred[h]
        fresh.ensure(tx.sender).balance -= tx.value
        fresh._charge(tx.sender, tx.gas_limit)
    return fresh, mismatches, unfinished


def audit(committed: Ledger, fresh: Ledger) -> AuditResult:
    replay, mismatches, unfinished = serial_replay(committed, fresh)
    return AuditResult(committed.account_digest(), replay.account_digest(), list(committed.audit),
                       mismatches, unfinished)
