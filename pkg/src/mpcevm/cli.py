"""Command line entry point.

    mpcevm run <scenario> [--seed N] [--latency L] [--report out.json] [--trace out.jsonl]
    mpcevm throughput --baseline A --mixed B [--sync C] [--report out.json]
    mpcevm selftest [--only 1,2,...]
    mpcevm list

Exit codes: 0 pass, 1 scenario failure, 2 invariant or audit violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import report, scenario
from .netsim import SimError

EXIT_OK, EXIT_FAIL, EXIT_VIOLATION = 0, 1, 2
DELIM = "-" * 60


def _summary_lines(rep: dict) -> list:
    lines = [f"scenario {rep['scenario']}  seed {rep['seed']}  n={rep['n']} t={rep['t']}  blocks {rep['blocks']}"]
    for s in rep["sessions"]:
        lines.append(f"  session {s['session'][:12]} tx={s['tx']} circuit={s['circuit']} result={s['result']} "
                     f"oracle={s['oracle']} -> {s['verdict']} ({s['outcome']})")
    for e in rep["expectations"]:
        what = e.get("tx") or e.get("contract") or e.get("account") or ""
        lines.append(f"  expect {e['kind']:<8} {what:<16} {'ok' if e['pass'] else 'FAILED'}  actual={e['actual']}")
    if "audit" in rep:
        a = rep["audit"]
        lines.append(f"  audit serializable={a['serializable']} locked_accesses={a['locked_accesses']}")
    lines.append(f"  regular/block mean {rep['throughput']['mean_regular_per_block']}")
    lines.append(f"  final state hash {rep['final_state_hash']}")
    lines.append(f"  verdict {rep['verdict']}")
    return lines


def _exit_for(rep: dict) -> int:
    if rep["verdict"] == "AUDIT_VIOLATION":
        return EXIT_VIOLATION
    return EXIT_OK if rep["verdict"] == "PASS" else EXIT_FAIL


def cmd_run(args) -> int:
    sc = scenario.load(args.scenario)
    run = scenario.execute(sc, seed=args.seed, latency=args.latency)
    rep = report.build_report(run)
    print(DELIM)
    print("\n".join(_summary_lines(rep)))
    print(DELIM)
    if args.report:
        for p in report.write_outputs(run, rep, args.report, args.trace):
            print(f"wrote {p}")
    elif args.trace:
        Path(args.trace).write_text(run.sim.trace_jsonl())
        print(f"wrote {args.trace}")
    return _exit_for(rep)


def cmd_throughput(args) -> int:
    base = scenario.execute(scenario.load(args.baseline))
    mixed = scenario.execute(scenario.load(args.mixed))
    sync = scenario.execute(scenario.load(args.sync)) if args.sync else None
    tr = report.throughput_report(base, mixed, sync)
    print(DELIM)
    print(f"baseline {tr['baseline']['scenario']}: {tr['baseline']['mean_regular_per_block']:.2f} regular/block")
    for key in ("mixed", "sync"):
        if key in tr:
            e = tr[key]
            print(f"{key:<8} {e['scenario']}: {e['mean_regular_per_block']:.2f} regular/block, "
                  f"degradation {e['degradation_pct']:.3f}%, {e['blocks_with_live_mpc']} blocks with live MPC")
    if tr.get("sync_vs_mixed_ratio") is not None:
        print(f"sync/mixed degradation ratio {tr['sync_vs_mixed_ratio']:.2f}")
    print(DELIM)
    if args.report:
        rp = Path(args.report)
        rp.parent.mkdir(parents=True, exist_ok=True)
        rp.write_text(json.dumps(tr, sort_keys=True, indent=2) + "\n")
        series = {"baseline": base.sim.regular_per_block(), "mixed": mixed.sim.regular_per_block()}
        if sync is not None:
            series["sync"] = sync.sim.regular_per_block()
        png = rp.with_suffix(".png")
        report.plot_blocks(series, png, "regular transactions committed per block")
        print(f"wrote {rp}\nwrote {png}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from . import acceptance
    only = {int(x) for x in args.only.split(",")} if args.only else None
    print(DELIM)
    checks = acceptance.run_all(only, echo=lambda s: print(s, flush=True))
    print(DELIM)
    passed = sum(c.passed for c in checks)
    print(f"{passed}/{len(checks)} acceptance checks passed")
    return EXIT_OK if passed == len(checks) else EXIT_FAIL


def cmd_list(args) -> int:
    for name in scenario.bundled_names():
        print(name)
    return EXIT_OK


def _latency(text):
    return None if text is None else int(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpcevm", description="MPC-enabled contract execution simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one scenario file (or a bundled scenario name)")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--latency", type=_latency, default=None, help="per-link P2P latency in ticks")
    r.add_argument("--report", help="JSON report path; a .blocks.csv and a .png are written next to it")
    r.add_argument("--trace", help="JSONL event trace path")
    r.set_defaults(fn=cmd_run)
    t = sub.add_parser("throughput", help="compare regular commits per block against a baseline")
    t.add_argument("--baseline", required=True)
    t.add_argument("--mixed", required=True)
    t.add_argument("--sync", help="optional synchronous-MPC contrast scenario")
    t.add_argument("--report")
    t.set_defaults(fn=cmd_throughput)
    s = sub.add_parser("selftest", help="run the bundled acceptance checks")
    s.add_argument("--only", help="comma separated check numbers")
    s.set_defaults(fn=cmd_selftest)
    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(fn=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except scenario.ScenarioInvalid as e:
        print(f"invalid scenario: {e}", file=sys.stderr)
        return EXIT_FAIL
    except SimError as e:
        print(f"simulation error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
