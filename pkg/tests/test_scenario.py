import json

import pytest

from tilesim.scenario import (
    BUNDLED, ScenarioError, apply_override, load_scenario, parse_scenario,
)


def minimal_doc(**over):
    doc = {
        "name": "t",
        "seed": 1,
        "horizon": 5000,
        "tiles": [{"id": "C0"}, {"id": "C1"}, {"id": "C2"}],
        "threads": [{"id": "Ta", "criticality": 5, "checkpoint_period": 1000,
                     "state_words": 4, "work_per_tick": 50}],
        "thread_groups": [{"id": "TG1", "threads": ["Ta"]}],
        "tile_groups": [{"id": "G1", "members": ["C0", "C1", "C2"],
                         "thread_groups": ["TG1"]}],
    }
    doc.update(over)
    return doc


def test_bundled_scenarios_load():
    for name in BUNDLED:
        s = load_scenario(name)
        assert s.tile_groups
        assert s.horizon > 0


def test_minimal_scenario_parses_with_defaults():
    s = parse_scenario(minimal_doc())
    g = s.tile_groups[0]
    assert s.base_period(g) == 1000
    assert s.comparison_deadline(g) == 100          # 10% of base period
    assert s.grace_period(g) == 2 * 10              # 2x summed update cost
    assert s.watchdog_period() == 4000              # 4x largest period


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(minimal_doc(power_budget=3))
    assert "unknown key" in str(err.value)


def test_dangling_references_rejected():
    doc = minimal_doc()
    doc["tile_groups"][0]["members"] = ["C0", "C1", "C9"]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "C9" in str(err.value)


def test_zero_horizon_rejected():
    with pytest.raises(ScenarioError) as err:
        parse_scenario(minimal_doc(horizon=0))
    assert "horizon" in str(err.value)


def test_all_problems_reported_at_once():
    doc = minimal_doc(horizon=0)
    doc["tile_groups"][0]["members"] = ["C0"]
    doc["thread_groups"].append({"id": "TG2", "threads": ["nope"]})
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    text = str(err.value)
    assert "horizon" in text
    assert "at least 2 members" in text
    assert "nope" in text


def test_spare_cannot_be_group_member():
    doc = minimal_doc()
    doc["tiles"][2]["spare"] = True
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "spare" in str(err.value)


def test_thread_group_assigned_twice_rejected():
    doc = minimal_doc()
    doc["tiles"].append({"id": "C3"})
    doc["tiles"].append({"id": "C4"})
    doc["tile_groups"].append(
        {"id": "G2", "members": ["C3", "C4"], "thread_groups": ["TG1"]})
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "assigned twice" in str(err.value)


def test_checkpoint_cost_must_fit_deadline():
    doc = minimal_doc()
    doc["threads"][0]["checksum_cost"] = 500
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "deadline" in str(err.value)


def test_fault_beyond_horizon_rejected():
    doc = minimal_doc()
    doc["faults"] = {"explicit": [{"at": 6000, "kind": "transient-state",
                                   "tile": "C0", "thread": "Ta", "word": 0}]}
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "beyond the horizon" in str(err.value)


def test_fault_target_validation():
    doc = minimal_doc()
    doc["faults"] = {"explicit": [{"at": 100, "kind": "transient-state",
                                   "tile": "C0", "thread": "Ta", "word": 12}]}
    with pytest.raises(ScenarioError) as err:
        parse_scenario(doc)
    assert "word index" in str(err.value)


def test_syntax_error_reports_line():
    import tempfile, os
    with tempfile.NamedTemporaryFile("w", suffix=".scenario", delete=False) as fh:
        fh.write('{\n  "seed": 1,\n  broken\n}\n')
        path = fh.name
    try:
        with pytest.raises(ScenarioError) as err:
            load_scenario(path)
        assert "line 3" in str(err.value)
    finally:
        os.unlink(path)


def test_override_simple_and_nested():
    doc = minimal_doc()
    apply_override(doc, "seed=99")
    apply_override(doc, "threads[0].checkpoint_period=2000")
    assert doc["seed"] == 99
    assert doc["threads"][0]["checkpoint_period"] == 2000


def test_override_wildcard():
    doc = minimal_doc()
    doc["threads"].append(dict(doc["threads"][0], id="Tb"))
    apply_override(doc, "threads[*].checkpoint_period=4000")
    assert all(t["checkpoint_period"] == 4000 for t in doc["threads"])


def test_override_bad_path():
    with pytest.raises(ScenarioError):
        apply_override(minimal_doc(), "threads[5].nope=1")


def test_override_creates_defaulted_section():
    doc = minimal_doc()  # has no "features" key
    apply_override(doc, "features.signal_loss_prob=0.5")
    assert doc["features"] == {"signal_loss_prob": 0.5}
    s = parse_scenario(doc)
    assert s.features.signal_loss_prob == 0.5
    # typos in created sections are still rejected downstream
    bad = minimal_doc()
    apply_override(bad, "features.nope=1")
    with pytest.raises(ScenarioError):
        parse_scenario(bad)


def test_canonical_json_is_stable():
    a = parse_scenario(minimal_doc())
    b = parse_scenario(minimal_doc())
    assert a.canonical_json() == b.canonical_json()
