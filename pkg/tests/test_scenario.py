from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from evsched.scenario import (
    ChargingStation,
    Driving,
    Ev,
    Parked,
    PriceCurve,
    ScenarioError,
    builtin_illustrative,
    canonical_hash,
    effective_power_limit,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
    with_fees,
)


def test_builtin_validates(builtin):
    assert validate(builtin) is builtin


def test_builtin_key_facts(builtin):
    assert builtin.time_grid.horizon_steps == 24
    assert builtin.time_grid.step_hours == 1.0
    assert [ev.obc_limit for ev in builtin.evs] == [4.0, 8.0, 12.0]
    assert builtin.evs[2].obc_limit == 12.0
    assert [cs.cp_limit for cs in builtin.stations] == [4.0, 8.0, 12.0]
    assert all(cs.num_cps == 3 for cs in builtin.stations)


def test_builtin_all_evs_home_at_night(builtin):
    for t in range(7):
        parked = [it.cs_at(t) for it in builtin.itineraries]
        assert parked == ["cs1", "cs1", "cs1"]


def test_builtin_itinerary_shapes(builtin):
    it3 = builtin.itinerary("ev3")
    assert it3.cs_at(8) == "cs2" and it3.cs_at(15) == "cs2"
    assert it3.cs_at(17) == "cs3" and it3.cs_at(20) == "cs3"
    assert isinstance(it3.states[7], Driving)
    assert isinstance(it3.states[16], Driving)
    assert isinstance(it3.states[21], Driving)
    assert it3.cs_at(22) == "cs1"
    it2 = builtin.itinerary("ev2")
    assert it2.cs_at(10) == "cs1" and it2.cs_at(12) == "cs3" and it2.cs_at(20) == "cs3"


def test_round_trip_file(builtin, tmp_path):
    path = tmp_path / "scenario.json"
    save_scenario(builtin, path)
    again = load_scenario(path)
    assert again == builtin
    assert canonical_hash(again) == canonical_hash(builtin)


def test_round_trip_dict(builtin):
    assert scenario_from_dict(scenario_to_dict(builtin)) == builtin


def test_itinerary_length_mismatch(builtin, tmp_path):
    doc = scenario_to_dict(builtin)
    doc["itineraries"][0]["states"] = doc["itineraries"][0]["states"][:23]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError, match="states length != horizon"):
        load_scenario(path)


def test_cp_capacity_exceeded(builtin):
    doc = scenario_to_dict(builtin)
    extra = dict(doc["evs"][0], id="ev4")
    doc["evs"].append(extra)
    states = [{"parked": "cs1"} if t == 5 else {"driving": {"e_run": 0.0}} for t in range(24)]
    doc["itineraries"].append({"ev_id": "ev4", "states": states})
    with pytest.raises(ScenarioError, match="CP capacity exceeded"):
        scenario_from_dict(doc)


def test_parse_error_context(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"time_grid": ')
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(path)


def test_missing_file():
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario("/does/not/exist.json")


@pytest.mark.parametrize(
    "mutate,error_match",
    [
        (lambda d: d["evs"][0].update(soe_min=50.0), "soe_min <= soe_init"),
        (lambda d: d["evs"][0].update(obc_limit=0.0), "obc_limit"),
        (lambda d: d["evs"][0].update(eta_sch=1.5), "eta_sch"),
        (lambda d: d["evs"][0].update(eta_dch=0.0), "eta_dch"),
        (lambda d: d["stations"][0].update(cp_limit=-1.0), "cp_limit"),
        (lambda d: d["stations"][0].update(num_cps=0), "num_cps"),
        (lambda d: d["stations"][0].update(grid_fee=-0.1), "grid_fee"),
        (lambda d: d["prices"].update(prices=[0.1] * 23), "price curve length"),
        (lambda d: d["prices"].update(penalty_short_factor=0.0), "penalty_short_factor"),
        (lambda d: d["itineraries"][0]["states"].__setitem__(0, {"parked": "nowhere"}), "unknown station"),
        (lambda d: d["forecast_error"].update(soe_sigma=-1.0), "soe_sigma"),
    ],
)
def test_single_field_mutations_rejected(builtin, mutate, error_match):
    doc = scenario_to_dict(builtin)
    mutate(doc)
    with pytest.raises(ScenarioError, match=error_match):
        scenario_from_dict(doc)


def test_random_bound_mutations_rejected(builtin):
    # push one numeric EV field past its bound; the validator must name it
    rng = np.random.default_rng(11)
    fields = ["soe_min", "soe_max", "obc_limit", "eta_sch", "eta_dch", "eta_run", "eta_fch"]
    bad_values = {
        "soe_min": 1e3,
        "soe_max": -1.0,
        "obc_limit": 0.0,
        "eta_sch": 0.0,
        "eta_dch": 2.0,
        "eta_run": -0.5,
        "eta_fch": 1.0001,
    }
    for _ in range(30):
        field = fields[rng.integers(len(fields))]
        doc = scenario_to_dict(builtin)
        doc["evs"][int(rng.integers(3))][field] = bad_values[field]
        with pytest.raises(ScenarioError, match=field.split("_")[0]):
            scenario_from_dict(doc)


def test_effective_power_limit(builtin):
    ev1, ev2, ev3 = builtin.evs
    cs1, cs2, cs3 = builtin.stations
    assert effective_power_limit(ev1, cs2) == 4.0  # OBC binds
    assert effective_power_limit(ev2, cs1) == 4.0  # CP binds
    assert effective_power_limit(ev3, cs3) == 12.0  # equal limits
    # symmetric in which side holds the smaller value, and idempotent
    for ev in builtin.evs:
        for cs in builtin.stations:
            swapped_ev = dataclasses.replace(ev, obc_limit=cs.cp_limit)
            swapped_cs = dataclasses.replace(cs, cp_limit=ev.obc_limit)
            assert effective_power_limit(ev, cs) == effective_power_limit(swapped_ev, swapped_cs)
            assert effective_power_limit(ev, cs) == min(ev.obc_limit, cs.cp_limit)


def test_negative_effective_price_warns(builtin):
    doc = scenario_to_dict(builtin)
    doc["prices"]["prices"][3] = -0.2
    with pytest.warns(UserWarning, match="negative effective buy price"):
        scenario_from_dict(doc)


def test_with_fees_zeroing(builtin):
    bare = with_fees(builtin, grid=False, utilization=False, degradation=False)
    assert all(cs.grid_fee == 0 and cs.utilization_fee == 0 for cs in bare.stations)
    assert all(ev.degradation_fee == 0 for ev in bare.evs)
    assert builtin.stations[0].grid_fee > 0  # original untouched
