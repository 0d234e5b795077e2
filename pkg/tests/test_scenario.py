import copy

import pytest

from mpcevm import acceptance, scenario
from mpcevm.scenario import ScenarioInvalid


def _doc():
    return copy.deepcopy(acceptance.probe_doc())


@pytest.mark.parametrize("name", scenario.bundled_names())
def test_bundled_scenarios_parse(name):
    sc = scenario.load(name)
    assert sc.n >= 3 * sc.t + 1


def test_malformed_toml_reports_line():
    with pytest.raises(ScenarioInvalid) as e:
        scenario.loads('name = "x"\n[parties]\nn = = 4\n')
    assert e.value.line == 3


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d["parties"].update(n=3), "parties"),
    (lambda d: d["circuits"][0].update(builder="nope"), "circuits"),
    (lambda d: d["tx"][1].update(after="missing"), "tx"),
    (lambda d: d["faults"].extend([{"party": 0, "behavior": "SILENT"}, {"party": 1, "behavior": "SILENT"}]),
     "faults"),
    (lambda d: d["faults"].append({"party": 0, "behavior": "SILENT", "activation": "output"}), "faults"),
    (lambda d: d["inputs"][0].update(values=[[1, 2], [5], [7], [2]]), "inputs"),
])
def test_invalid_documents_name_the_field(mutate, field):
    doc = _doc()
    mutate(doc)
    with pytest.raises(ScenarioInvalid) as e:
        scenario.from_dict(doc)
    assert e.value.field and e.value.field.startswith(field)


def test_unknown_bundled_name():
    with pytest.raises(ScenarioInvalid):
        scenario.load("does_not_exist")


def test_replace_overrides_seed():
    sc = scenario.from_dict(_doc())
    assert sc.replace(seed=99).seed == 99 and sc.seed == 5
