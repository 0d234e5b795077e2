"""Scenario reports: verdicts, oracle comparisons, audit, per-block series.

Everything in a report is derived from the run itself (no wall-clock values),
so the same scenario and seed always serialize to the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Optional

from . import oracle
from .audit import audit
from .field import DEFAULT_PRIME
from .scenario import Run, _Resolver, build_ledger


def _canon(v):
    if isinstance(v, (list, tuple)):
        return [_canon(x) for x in v]
    return v


def session_rows(run: Run) -> list:
    sc, L = run.scenario, run.ledger
    name_of = {h: name for name, hs in run.tx_names.items() for h in hs}
    faulty = {f.party for f, _ in sc.faults}
    rows = []
    for h, info in L.txmgr.sessions.items():
        cname = run.circuit_of.get(info.cid)
        kind = sc.circuits[cname][0] if cname in sc.circuits else None
        result = list(info.final_result) if info.final_result is not None else None
        row = {"session": h, "tx": name_of.get(h), "contract": info.contract, "circuit": cname,
               "params": list(info.params), "invocations": info.invocation_count + 1,
               "status": info.status.value, "result": result, "cheater": info.cheater,
               "outcome": L.session_outcomes.get(h, {}).get("outcome")}
        expected = oracle.expected(kind, list(info.params), sc.inputs.get(cname, [])) if kind else None
        if expected is not None:
            expected = [v % DEFAULT_PRIME for v in expected]
        row["oracle"] = expected
        if result is None:
            verdict = "PENDING"
        elif result[-2] == 1:
            verdict = "PASS" if result[-1] in faulty else "FAIL"
        elif expected is None:
            verdict = "N/A"
        else:
            verdict = "PASS" if result[:-2] == expected else "FAIL"
        row["verdict"] = verdict
        rows.append(row)
    return rows


def _receipt(run: Run, name: str):
    hashes = run.tx_names.get(name) or []
    if not hashes:
        return None
    want = hashes[-1]
    for _, _, rs in run.ledger.blocks:
        for r in rs:
            if r.tx_hash == want:
                return r
    return None


def check_expectations(run: Run, sessions: list) -> list:
    res = _Resolver(run)
    L = run.ledger
    out = []
    for e in run.scenario.expects:
        kind = e["kind"]
        actual, ok = None, False
        try:
            if kind == "receipt":
                r = _receipt(run, e["tx"])
                actual = None if r is None else {"status": r.status, "cause": r.cause}
                ok = r is not None and r.status == e.get("status", r.status) and \
                    ("cause" not in e or r.cause == e["cause"])
            elif kind == "outcome":
                hs = run.tx_names.get(e["tx"]) or []
                actual = L.session_outcomes.get(hs[-1], {}).get("outcome") if hs else None
                ok = actual == e["outcome"]
            elif kind == "result":
                hs = run.tx_names.get(e["tx"]) or []
                info = L.txmgr.sessions.get(hs[-1]) if hs else None
                actual = list(info.final_result) if info and info.final_result is not None else None
                ok = actual == _canon(res.value(e["value"]))
            elif kind == "storage":
                addr = res.value(e["contract"])
                key = res.value(e["key"])
                actual = _canon(L.storage(addr, key))
                ok = actual == _canon(res.value(e["value"]))
            elif kind == "balance":
                a = L.account(res.value(e["account"]))
                actual = a.balance if a else 0
                ok = actual == e["value"]
            elif kind == "oracle":
                verdicts = [s["verdict"] for s in sessions]
                actual = verdicts
                # a session cut off by the run length is not judged
                ok = "PASS" in verdicts and all(v in ("PASS", "PENDING") for v in verdicts)
        except Exception as exc:  # a broken expectation is a failure, not a crash
            actual, ok = f"error: {exc}", False
        out.append({**{k: _canon(v) for k, v in e.items()}, "actual": actual, "pass": ok})
    return out


def build_report(run: Run, with_audit: bool = True) -> dict:
    sc, L, sim = run.scenario, run.ledger, run.sim
    sessions = session_rows(run)
    expectations = check_expectations(run, sessions)
    per_block = sim.regular_per_block()
    rep = {
        "scenario": sc.name, "seed": sc.seed, "n": sc.n, "t": sc.t, "blocks": L.height,
        "sync_mode": sc.sync,
        "sessions": sessions,
        "receipts": {name: _receipt_json(run, name) for name in sorted(run.tx_names)},
        "expectations": expectations,
        "throughput": {"regular_per_block": per_block,
                       "mpc_txs_per_block": [s.mpc_txs for s in sim.stats],
                       "live_sessions_per_block": [s.live_sessions for s in sim.stats],
                       "mean_regular_per_block": round(sum(per_block) / len(per_block), 6) if per_block else 0.0},
        "queue": {"max_parallel_mults": L.txmgr.queue.cap, "events": len(L.txmgr.queue.log)},
        "final_state_hash": L.state_hash(),
        "account_digest": L.account_digest(),
        "mpc_digest": L.mpc_digest(),
    }
    if with_audit:
        fresh, _, _ = build_ledger(sc)
        rep["audit"] = audit(L, fresh).to_json()
    failed = [e for e in expectations if not e["pass"]] + [s for s in sessions if s["verdict"] == "FAIL"]
    rep["verdict"] = "FAIL" if failed else "PASS"
    if with_audit and not rep["audit"]["ok"]:
        rep["verdict"] = "AUDIT_VIOLATION"
    return rep


def _receipt_json(run: Run, name: str) -> list:
    out = []
    hashes = set(run.tx_names.get(name) or [])
    for _, _, rs in run.ledger.blocks:
        for r in rs:
            if r.tx_hash in hashes:
                d = {"tx_hash": r.tx_hash, "status": r.status, "height": r.height, "gas_used": r.gas_used}
                if r.cause:
                    d["cause"] = r.cause
                outcome = run.ledger.session_outcomes.get(r.tx_hash)
                if outcome:
                    d["mpc_outcome"] = outcome["outcome"]
                out.append(d)
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def blocks_csv(run: Run) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["height", "tick", "mpc_txs", "regular", "regular_committed", "live_sessions"])
    for s in run.sim.stats:
        w.writerow([s.height, s.tick, s.mpc_txs, s.regular, s.regular_committed, s.live_sessions])
    return buf.getvalue()


def plot_blocks(series: dict, path, title: str = "regular transactions per block"):
    """Line plot of one or more per-block series; written with a fixed backend and no metadata."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5), dpi=100)
    for label in sorted(series):
        ys = series[label]
        ax.plot(range(1, len(ys) + 1), ys, label=label, linewidth=1.2)
    ax.set_xlabel("block height")
    ax.set_ylabel("committed")
    ax.set_title(title)
    ax.set_ylim(bottom=0)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_outputs(run: Run, report: dict, report_path, trace_path: Optional[str] = None) -> list:
    """Write the JSON report plus a CSV and a PNG next to it.  Returns the files written."""
    rp = Path(report_path)
    rp.parent.mkdir(parents=True, exist_ok=True)
    rp.write_text(dumps(report))
    written = [rp]
    csv_path = rp.with_suffix(".blocks.csv")
    csv_path.write_text(blocks_csv(run))
    written.append(csv_path)
    png = rp.with_suffix(".png")
    plot_blocks({"regular committed": report["throughput"]["regular_per_block"],
                 "MPC broadcasts": report["throughput"]["mpc_txs_per_block"]}, png,
                f"{report['scenario']}: transactions per block")
    written.append(png)
    if trace_path:
        Path(trace_path).write_text(run.sim.trace_jsonl())
        written.append(Path(trace_path))
    return written


# ---------------------------------------------------------------- throughput

def throughput_report(baseline: Run, mixed: Run, sync: Optional[Run] = None) -> dict:
    """Average regular commits per block and the relative drop against the baseline."""
    def mean(run):
        s = run.sim.regular_per_block()
        return sum(s) / len(s) if s else 0.0

    base = mean(baseline)
    out = {"baseline": {"scenario": baseline.scenario.name, "mean_regular_per_block": round(base, 6),
                        "blocks": baseline.ledger.height}}

    def entry(run):
        m = mean(run)
        drop = 0.0 if base == 0 else (base - m) / base * 100.0
        live = [s.regular_committed for s in run.sim.stats if s.live_sessions]
        return {"scenario": run.scenario.name, "mean_regular_per_block": round(m, 6),
                "degradation_pct": round(drop, 6), "blocks": run.ledger.height,
                "blocks_with_live_mpc": len(live),
                "min_regular_during_mpc": min(live) if live else None,
                "sessions": len(run.ledger.txmgr.sessions)}

    out["mixed"] = entry(mixed)
    if sync is not None:
        out["sync"] = entry(sync)
        d_mixed, d_sync = out["mixed"]["degradation_pct"], out["sync"]["degradation_pct"]
        out["sync_vs_mixed_ratio"] = round(d_sync / d_mixed, 6) if d_mixed > 0 else None
    return out
