"""Scenario validation and departure-time kinematics."""

import copy

import pytest

from metroplan.domain import (ScenarioError, chain_horizons, departure_time,
                              dist_head_to_shortturn, extended_horizon,
                              kappa, max_trips_bound, station_offsets,
                              validate_scenario)
from metroplan.solution import LinePlanSolution, NetworkSolution, TripPlan

from conftest import coupled_toy_raw, tiny_scenario_raw


def test_station_offsets_accumulate_travel_and_stop():
    scen = validate_scenario(tiny_scenario_raw())
    ln = scen.lines[0]
    # d = (2, 1, 2), e = (0, .5, .5, 0)
    assert station_offsets(ln) == (0.0, 2.5, 4.0, 6.0)
    assert extended_horizon(ln, 10.0) == 16.0


def test_departure_time_and_shift_rules():
    scen = validate_scenario(tiny_scenario_raw(short=True))
    ln = scen.lines[0]
    assert departure_time(3.0, 3, ln) == 7.0
    assert departure_time(3.0, 2, ln, w=1.5) == 7.0
    with pytest.raises(ValueError):
        departure_time(3.0, 1, ln, w=1.0)   # head is outside the section
    with pytest.raises(ValueError):
        departure_time(0.0, 9, ln)


def test_kappa_counts_section_cycles_before_merge():
    scen = validate_scenario(tiny_scenario_raw(short=True))
    ln = scen.lines[0]
    assert dist_head_to_shortturn(ln) == 2.5
    assert kappa(ln) == 2     # floor(2.5 / 2) + 1


def test_max_trips_bound():
    assert max_trips_bound(10.0, 2.0) == 6
    assert max_trips_bound(10.0, 3.0) == 5
    with pytest.raises(ValueError):
        max_trips_bound(10.0, 0.0)


@pytest.mark.parametrize("mutate,field", [
    (lambda r: r.__setitem__("horizon_minutes", -1), "horizon_minutes"),
    (lambda r: r.__setitem__("alpha", 2.0), "alpha"),
    (lambda r: r["lines"][0].__setitem__("d", [2.0, -1.0, 2.0]), "d"),
    (lambda r: r["lines"][0].__setitem__("max_trips", 99), "max_trips"),
    (lambda r: r["lines"][0].__setitem__("capacities", [50, 50]),
     "capacities"),
    (lambda r: r["lines"][0]["p"][2].__setitem__(0, 0.5), "p"),
    (lambda r: r["lines"][0]["p"][0].__setitem__(1, 0.9), "p[0]"),
    (lambda r: r["demand"]["A"].__setitem__("beta0", [1.0]), "demand.A"),
    (lambda r: r["demand"]["A"]["external_jumps"].__setitem__(
        1, [[3.0, 5.0], [3.0, 5.0]]), "external_jumps"),
])
def test_validation_rejects_bad_fields(mutate, field):
    raw = tiny_scenario_raw()
    mutate(raw)
    with pytest.raises(ScenarioError) as exc:
        validate_scenario(raw)
    assert any(field.split("[")[0] in p for p, _ in exc.value.violations)


def test_validation_rejects_short_turn_covering_head():
    raw = tiny_scenario_raw(short=True)
    raw["lines"][0]["short_turn"]["first"] = 1
    with pytest.raises(ScenarioError):
        validate_scenario(raw)


def test_validation_rejects_unreachable_merge_trip():
    raw = tiny_scenario_raw(short=True)
    raw["lines"][0]["d"][0] = 8.0    # head->section 8.5 min, merge index 5
    with pytest.raises(ScenarioError) as exc:
        validate_scenario(raw)
    assert any("merge trip" in m for _, m in exc.value.violations)
    # merge index equal to the trip count is just as unservable
    raw = tiny_scenario_raw(short=True)
    raw["lines"][0]["d"][0] = 4.0    # head->section 4.5 min, merge index 3
    with pytest.raises(ScenarioError):
        validate_scenario(raw)


def test_validation_rejects_bad_interchange():
    raw = coupled_toy_raw()
    raw["interchanges"][0]["station_pairs"][0] = ["NOPE", 3]
    with pytest.raises(ScenarioError):
        validate_scenario(raw)
    raw = coupled_toy_raw()
    raw["interchanges"][0]["tau"]["A"]["B"] = 1.5
    with pytest.raises(ScenarioError):
        validate_scenario(raw)


def test_transfer_feeds_lookup():
    scen = validate_scenario(coupled_toy_raw())
    assert scen.transfer_feeds("B", 2) == [("A", 3, 0.3)]
    assert scen.transfer_feeds("B", 3) == []
    assert scen.transfer_feeds("A", 3) == [("B", 2, 0.3)]


def test_chain_horizons_adds_terminal_surplus():
    scen = validate_scenario(tiny_scenario_raw())
    n = scen.lines[0].n_stations
    trip = TripPlan(kind="whole", capacity=50, t1=10.0, w=0.0,
                    f=(0.0,) * n, g=(0.0,) * n,
                    h=(1.0, 2.0, 3.0, 0.0), x=(0.0,) * n,
                    demand=(0.0,) * n)
    sol = NetworkSolution(
        lines={"A": LinePlanSolution("A", (trip,), 0.0)},
        objective=0.0, verified=True)
    nxt = chain_horizons(sol, scen)
    assert nxt.demand["A"][0].beta0 == scen.demand["A"][0].beta0 + 1.0
    assert nxt.demand["A"][2].beta0 == scen.demand["A"][2].beta0 + 3.0


def test_chain_horizons_requires_verified_solution():
    scen = validate_scenario(tiny_scenario_raw())
    sol = NetworkSolution(lines={}, objective=0.0, verified=False)
    with pytest.raises(ValueError):
        chain_horizons(sol, scen)
