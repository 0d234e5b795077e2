import pytest

from mpcevm import acceptance, scenario
from mpcevm.engine.party import FaultBehavior, FaultSpec
from mpcevm.ledger import Ledger
from mpcevm.netsim import Simulation, TooManyFaults


def _probe(**kw):
    return scenario.from_dict(acceptance.probe_doc(**kw))


def test_empty_schedule_produces_empty_blocks():
    sim = Simulation(Ledger(), ["a", "b", "c", "d"], 1)
    sim.run_blocks(3)
    assert sim.ledger.height == 3
    assert [s.tick for s in sim.stats] == [10, 20, 30]
    assert sim.regular_per_block() == [0, 0, 0]


def test_latency_table_lookup():
    sim = Simulation(Ledger(), ["a", "b", "c", "d"], 1, latency={(0, 1): 7, "default": 2})
    assert sim.link_latency(0, 1) == 7 and sim.link_latency(1, 0) == 2
    assert Simulation(Ledger(), ["a"], 0, latency=lambda s, d: s + d).link_latency(2, 3) == 5


def test_p2p_delivered_after_link_latency():
    run = scenario.execute(_probe(), latency=3)
    sends = [r for r in run.sim.trace if r.get("event") == "p2p"]
    assert sends and all(r["tick"] % run.sim.block_interval == 3 for r in sends)


def test_too_many_faults():
    sim = Simulation(Ledger(), ["a", "b", "c", "d"], 1)
    sim.inject(FaultSpec(0, FaultBehavior.SILENT))
    with pytest.raises(TooManyFaults):
        sim.inject(FaultSpec(1, FaultBehavior.SILENT))


def test_honest_probe_finishes_and_matches_oracle():
    run = scenario.execute(_probe())
    (info,) = run.ledger.txmgr.sessions.values()
    assert list(info.final_result) == acceptance.oracle.probe(4, [3, 5, 7, 2]) + [0, 0]
    assert not run.ledger.locks()


def test_same_seed_same_trace():
    a = scenario.execute(_probe(seed=3))
    b = scenario.execute(_probe(seed=3))
    assert a.sim.trace_jsonl() == b.sim.trace_jsonl()
    assert a.ledger.state_hash() == b.ledger.state_hash()


def test_silent_party_in_large_committee():
    doc = acceptance.probe_doc(faults=[{"party": 6, "behavior": "SILENT", "activation": "start"}])
    doc["parties"] = {"n": 10, "t": 3}
    run = scenario.execute(scenario.from_dict(doc))
    (info,) = run.ledger.txmgr.sessions.values()
    res = list(info.final_result)
    assert res == acceptance.oracle.probe(4, [3, 5, 7, 2]) + [0, 0] or res[-2:] == [1, 6]
