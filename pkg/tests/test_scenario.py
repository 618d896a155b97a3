import copy
import json

import pytest

from qcompose.errors import CapExceeded, ParseError, SchemaError, UnresolvedReference
from qcompose.scenario import (
    load_scenario,
    parse_scenario,
    scenario_schema,
    shipped_path,
    shipped_scenarios,
    validate_scenario,
)

BASE = {
    "schema_version": 1,
    "name": "mini",
    "functionalities": {"ot": {"builtin": "f_12ot", "ell": 1}},
    "protocols": {"ot.ideal": {"builtin": "ideal", "functionality": "ot"}},
    "strategies": {"chooser": {"side": "bob", "send": {"uniform": [0, 1]}}},
    "checks": [{"id": "c", "kind": "verify", "protocol": "ot.ideal", "strategies": ["chooser"], "bound": 0.0}],
}


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


def test_minimal_scenario_loads(tmp_path):
    sc = load_scenario(write(tmp_path, BASE))
    assert sc.name == "mini"
    assert [c.id for c in sc.checks] == ["c"]
    assert sc.checks_of("verify") and not sc.checks_of("compose")
    assert len(sc.digest) == 64
    assert sc.warnings == []


def test_overrides(tmp_path):
    sc = load_scenario(write(tmp_path, BASE), seed=9, tolerance=1e-6, budget=50)
    assert (sc.seed, sc.tolerance, sc.budget) == (9, 1e-6, 50)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ParseError):
        load_scenario(tmp_path / "missing.json")
    with pytest.raises(ParseError):
        load_scenario(write(tmp_path, "{not json"))


def test_schema_violations(tmp_path):
    doc = copy.deepcopy(BASE)
    del doc["checks"]
    with pytest.raises(SchemaError):
        load_scenario(write(tmp_path, doc))
    doc = copy.deepcopy(BASE)
    doc["checks"][0]["kind"] = "prove"
    with pytest.raises(SchemaError):
        load_scenario(write(tmp_path, doc))
    doc = copy.deepcopy(BASE)
    doc["checks"].append(dict(doc["checks"][0]))
    with pytest.raises(SchemaError):
        load_scenario(write(tmp_path, doc))


def test_unresolved_reference(tmp_path):
    doc = copy.deepcopy(BASE)
    doc["checks"][0]["protocol"] = "nowhere"
    with pytest.raises(UnresolvedReference, match="nowhere"):
        load_scenario(write(tmp_path, doc))


def test_string_length_cap(tmp_path):
    doc = copy.deepcopy(BASE)
    doc["functionalities"]["ot"]["ell"] = 10
    with pytest.raises(CapExceeded, match="string length"):
        load_scenario(write(tmp_path, doc))


def test_password_cap(tmp_path):
    doc = copy.deepcopy(BASE)
    doc["functionalities"]["id"] = {"builtin": "f_id", "n_passwords": 20}
    doc["protocols"]["id.ideal"] = {"builtin": "ideal", "functionality": "id"}
    doc["checks"].append({"id": "d", "kind": "verify", "protocol": "id.ideal", "strategies": [], "bound": 0})
    with pytest.raises(CapExceeded, match="password alphabet"):
        load_scenario(write(tmp_path, doc))


def test_non_trace_preserving_kraus_rejected(tmp_path):
    doc = copy.deepcopy(BASE)
    half = [[[0.5, 0], [0, 0]], [[0, 0], [0.5, 0]]]
    doc["protocols"]["bad"] = {"kraus": {"functionality": "ot", "bob": [{"input": [0, 0], "ops": [half]}]}}
    doc["checks"][0]["protocol"] = "bad"
    with pytest.raises(SchemaError, match="not trace preserving"):
        load_scenario(write(tmp_path, doc))


def test_unused_entries_warn(tmp_path):
    doc = copy.deepcopy(BASE)
    doc["strategies"]["spare"] = {"side": "alice", "send": {"points": [[[0, 0], 1.0]]}}
    sc = load_scenario(write(tmp_path, doc))
    assert any("spare" in w for w in sc.warnings)


def test_validate_scenario_directly():
    validate_scenario(BASE)
    with pytest.raises(SchemaError):
        validate_scenario({"name": "x"})
    assert scenario_schema()["$schema"].startswith("https://json-schema.org/")


def test_parse_without_a_file():
    sc = parse_scenario(copy.deepcopy(BASE), "<memory>")
    assert sc.path == "<memory>"


@pytest.mark.parametrize("name", shipped_scenarios())
def test_shipped_scenarios_load_cleanly(name):
    sc = load_scenario(shipped_path(name))
    assert sc.name == name
    assert sc.checks
    assert sc.warnings == []


def test_unknown_shipped_name():
    with pytest.raises(UnresolvedReference):
        shipped_path("no-such-scenario")
