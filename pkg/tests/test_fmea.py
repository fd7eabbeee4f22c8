import json

import pytest
from hypothesis import given, strategies as st

from omfmea import dsl, fmea, model
from omfmea.behavior import UnknownFaultError
from omfmea.expr import INDETERMINATE


@pytest.fixture(scope="module")
def fuel():
    system = model.instantiate(dsl.load_model(dsl.shipped("fuel.omdl")), "fuel")
    scenario = dsl.load_scenario(dsl.shipped("fuel.omsc"))
    return system, scenario


@pytest.fixture(scope="module")
def campaign(fuel):
    return fmea.run_campaign(*fuel)


@pytest.fixture(scope="module")
def rows(campaign):
    return fmea.build_rows(campaign)


def row_for(rows, cause):
    return next(r for r in rows if r.cause == cause)


@pytest.mark.parametrize("trigger,effect,state", [
    (True, True, fmea.ACHIEVED),
    (True, False, fmea.FAILED),
    (False, True, fmea.UNEXPECTED),
    (False, False, fmea.INOPERATIVE),
    (INDETERMINATE, True, fmea.INDETERMINATE_STATE),
])
def test_classify_function_state(trigger, effect, state):
    assert fmea.classify_function_state(trigger, effect) == state


def test_worst_state_prefers_failure():
    assert fmea.worst_state([fmea.ACHIEVED, fmea.FAILED, fmea.INOPERATIVE]) == fmea.FAILED
    assert fmea.worst_state([fmea.ACHIEVED, fmea.INOPERATIVE]) == fmea.INOPERATIVE


@pytest.mark.parametrize("factors,rpn", [((6, 8, None), 48), ((8, 8, None), 64), ((2, 3, 4), 24), ((None, None, None), 1)])
def test_compute_rpn(factors, rpn):
    assert fmea.compute_rpn(*factors) == rpn


def test_nominal_run_is_clean(campaign):
    assert campaign.nominal.error is None
    assert not campaign.nominal.incomplete
    assert fmea.nominal_anomalies(campaign) == []
    on = campaign.nominal.steps[2]
    assert on.label == "normal_on"
    assert on.functions == {"engine_supply": fmea.ACHIEVED, "engine_feed": fmea.ACHIEVED}


def test_blocked_return_row(rows):
    row = row_for(rows, "ReturnPipe - blocked")
    assert row.rpn == 48
    (entry,) = row.steps
    assert entry.label == "normal_on"
    assert dict(entry.observables) == {
        "tank_level": "lower than expected (normal tank level decrease expected)"}
    assert [(f.name, f.state, f.effect) for f in entry.functions] == [
        ("engine_supply", fmea.FAILED, "excess fuel not returned to tank")]


def test_supply_fracture_row(rows):
    row = row_for(rows, "SupplyPipe - fracture")
    assert row.rpn == 64
    obs = dict(row.steps[0].observables)
    assert obs["meter_flow"] == "none (normal expected)"
    assert obs["tank_level"].startswith("higher than expected")
    assert {f.name: f.state for f in row.steps[0].functions} == {
        "engine_supply": fmea.FAILED, "engine_feed": fmea.FAILED}


def test_rows_sorted_by_rpn(rows):
    rpns = [r.rpn for r in rows]
    assert rpns == sorted(rpns, reverse=True)


def test_model_pair_included(rows):
    assert row_for(rows, "SupplyPipe - blocked + ReturnPipe - blocked").rpn == 64


def test_repeated_observables_compressed(rows):
    row = row_for(rows, "ReturnValve - stuck_closed")
    assert [e.label for e in row.steps] == ["start", "normal_set", "normal_on", "normal_off"]
    assert row.steps[1].same_as_previous
    assert row.steps[1].observables == []
    text = fmea.render_report([row])
    assert "ALL" in text and "as previous step" in text


def test_unknown_fault_rejected_up_front(fuel):
    with pytest.raises(UnknownFaultError):
        fmea.run_campaign(*fuel, faults=["Nope.blocked"])


def test_explicit_fault_list(fuel):
    c = fmea.run_campaign(*fuel, faults=["ReturnPipe.blocked"], include_model_pairs=False)
    assert [r.cause for r in c.runs] == [("ReturnPipe.blocked",)]


def test_parallel_campaign_matches_serial(fuel, rows):
    c = fmea.run_campaign(*fuel, jobs=4)
    assert fmea.render_report(fmea.build_rows(c), "json") == fmea.render_report(rows, "json")


def test_compare_identical_runs_is_empty(campaign):
    assert fmea.compare_runs(campaign.nominal, campaign.nominal, campaign.functions,
                             campaign.observables, campaign.system_ref) == []


def test_empty_campaign_renders_header_only():
    text = fmea.render_report([], "text")
    assert text.splitlines() == [text.strip()]
    assert fmea.render_report([], "csv").strip() == ",".join(fmea.CSV_FIELDS)
    assert json.loads(fmea.render_report([], "json")) == {"rows": []}


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_report_round_trip(rows, fmt):
    text = fmea.render_report(rows, fmt)
    again = fmea.load_report(text, fmt)
    assert fmea.render_report(again, fmt) == text
    assert not fmea.diff_reports(rows, again)


def test_diff_reports(rows):
    old = [r for r in rows if r.cause != "ReturnPipe - blocked"]
    new = [r for r in rows if r.cause != "Engine - flameout"]
    diff = fmea.diff_reports(old, new)
    assert {k[0] for k, _ in diff.added} == {"ReturnPipe - blocked"}
    assert {k[0] for k, _ in diff.removed} == {"Engine - flameout"}
    assert diff.changed == []
    text = fmea.render_diff(diff)
    assert text.startswith("Incremental FMEA: 1 added, 2 removed, 0 changed")
    assert json.loads(fmea.render_diff(diff, "json"))["added"]
    assert fmea.render_diff(diff, "csv").startswith("change,cause")


def test_diff_detects_changed_severity(rows):
    again = fmea.load_report(fmea.render_report(rows, "json"))
    row = row_for(again, "ReturnPipe - blocked")
    row.steps[0].functions[0].severity = 9
    diff = fmea.diff_reports(rows, again)
    assert len(diff.changed) == 1
    assert "severity 6 -> 9" in fmea.render_diff(diff)


def test_diff_of_identical_reports_is_empty(rows):
    assert not fmea.diff_reports(rows, rows)


@given(st.lists(st.sampled_from(range(12)), unique=True))
def test_diff_of_same_subset_is_empty(idx):
    from_rows = [ROWS[i] for i in idx if i < len(ROWS)]
    assert not fmea.diff_reports(from_rows, list(reversed(from_rows)))


def _fuel_rows():
    system = model.instantiate(dsl.load_model(dsl.shipped("fuel.omdl")), "fuel")
    scenario = dsl.load_scenario(dsl.shipped("fuel.omsc"))
    return fmea.build_rows(fmea.run_campaign(system, scenario))


ROWS = _fuel_rows()
