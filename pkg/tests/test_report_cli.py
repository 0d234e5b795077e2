import json

from mpcevm import cli, report, scenario
from mpcevm.audit import audit
from mpcevm.scenario import build_ledger


def test_audit_passes_and_detects_tampering():
    run = scenario.execute(scenario.load("lock_matrix"))
    fresh, _, _ = build_ledger(run.scenario)
    res = audit(run.ledger, fresh)
    assert res.ok and res.serializable
    victim = run.contracts["c2"]
    run.ledger.accounts[victim].storage["x2"] = 999
    fresh, _, _ = build_ledger(run.scenario)
    assert not audit(run.ledger, fresh).serializable


def test_report_is_byte_identical():
    a = report.dumps(report.build_report(scenario.execute(scenario.load("malicious_dealer"))))
    b = report.dumps(report.build_report(scenario.execute(scenario.load("malicious_dealer"))))
    assert a == b
    rep = json.loads(a)
    assert rep["verdict"] == "PASS"
    assert rep["sessions"][0]["result"][-2:] == [1, 2]


def test_cli_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "lock.json"
    trace = tmp_path / "lock.jsonl"
    assert cli.main(["run", "lock_matrix", "--report", str(out), "--trace", str(trace)]) == 0
    printed = capsys.readouterr().out
    assert printed.count(cli.DELIM) == 2 and "verdict PASS" in printed
    for p in (out, out.with_suffix(".blocks.csv"), out.with_suffix(".png"), trace):
        assert p.exists() and p.stat().st_size > 0
    assert out.with_suffix(".png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    first = out.read_bytes()
    assert cli.main(["run", "lock_matrix", "--report", str(out)]) == 0
    assert out.read_bytes() == first


def test_cli_invalid_scenario_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('name = "bad"\n[parties]\nn = 3\nt = 1\n')
    assert cli.main(["run", str(bad)]) == cli.EXIT_FAIL
    assert "invalid scenario" in capsys.readouterr().err


def test_cli_failed_expectation_exit_code(tmp_path):
    text = scenario.resources.files("mpcevm.scenarios").joinpath("lock_matrix.toml").read_text()
    text += '\n[[expect]]\nkind = "outcome"\ntx = "neither"\noutcome = "reverted_at_resume"\n'
    path = tmp_path / "lock_bad.toml"
    path.write_text(text)
    assert cli.main(["run", str(path)]) == cli.EXIT_FAIL


def test_exit_mapping():
    assert cli._exit_for({"verdict": "AUDIT_VIOLATION"}) == cli.EXIT_VIOLATION
    assert cli._exit_for({"verdict": "FAIL"}) == cli.EXIT_FAIL


def test_cli_list(capsys):
    assert cli.main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "lock_matrix" in names and "voting_10" in names
