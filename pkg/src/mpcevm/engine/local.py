"""Off-chain driver: runs one session with broadcasts delivered in lock-step rounds.

Used by tests and by the crypto self-checks; the full system goes through the
ledger and the event simulator instead.  A round plays the role of a block.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence

from ..circuit import Circuit, CircuitRegistry
from ..txmgr import TxManager
from .party import FaultSpec, PartySession, make_session_config


@dataclass
class LocalRun:
    result: Optional[tuple]
    rounds: int
    parties: list
    queue_log: list
    max_running: int


def run_offchain(circuit: Circuit, public_inputs: Sequence[int], secret_inputs: Sequence[Sequence[int]],
                 n: int, t: int, seed: int = 0, faults: Sequence[FaultSpec] = (),
                 max_parallel_mults: int = 4, max_rounds: int = 5000, dispute_timeout: int = 2) -> LocalRun:
    registry = CircuitRegistry()
    c = registry.get(registry.register(circuit))
    finished = []
    mgr = TxManager(registry, max_parallel_mults, finish_hook=lambda h, i, r: finished.append(r))
    addrs = [f"p{i}" for i in range(n)]
    session = "local"
    mgr.enter_mpc("contract", session, c.cid, public_inputs, addrs, t)
    cfg = make_session_config(session, 0, c, public_inputs, n, t, dispute_timeout=dispute_timeout)
    by_party = {f.party: f for f in faults}
    inputs = list(secret_inputs) + [[]] * (n - len(secret_inputs))
    parties = [PartySession(cfg, i, inputs[i], random.Random(f"{seed}/{i}"), by_party.get(i))
               for i in range(n)]
    bcasts, rets = [], []
    max_running = 0

    def absorb(actions):
        p2p = []
        for a in actions:
            if a[0] == "p2p":
                p2p.append(a)
            elif a[0] == "bcast":
                bcasts.append(a[1])
            else:
                rets.append(a[1])
        while p2p:
            _, to, msg = p2p.pop(0)
            for a in parties[to].on_p2p(msg):
                if a[0] == "p2p":
                    p2p.append(a)
                elif a[0] == "bcast":
                    bcasts.append(a[1])
                else:
                    rets.append(a[1])

    mgr.events.clear()
    for p in parties:
        absorb(p.start(0))
    for rnd in range(1, max_rounds):
        block, bcasts[:] = list(bcasts), []
        rs, rets[:] = list(rets), []
        for m in block:
            if not finished:
                mgr.route(addrs[m.sender], m)
        for m in rs:
            if not finished:
                mgr.route(addrs[m.sender], m)
        max_running = max(max_running, len(mgr.queue.running))
        if finished:
            return LocalRun(finished[0], rnd, parties, mgr.queue.log, max_running)
        approvals = [(e[3], e[4]) for e in mgr.events if e[0] == "approve"]
        mgr.events.clear()
        for p in parties:
            absorb(p.on_block(rnd, block, approvals))
    return LocalRun(None, max_rounds, parties, mgr.queue.log, max_running)
