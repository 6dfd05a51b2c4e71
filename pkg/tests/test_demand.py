"""Frozen demand curves: evaluation, merging and induced jumps."""

import hypothesis.strategies as st
import pytest
from hypothesis import given, settings

from metroplan.demand import (DemandSpec, FrozenDemand, InternalJumpSchedule,
                              internal_jumps_from_solution, merge_breakpoints)
from metroplan.domain import validate_scenario
from metroplan.solution import LinePlanSolution, TripPlan

from conftest import coupled_toy_raw


def test_affine_evaluation():
    fr = merge_breakpoints(DemandSpec(beta0=5.0, rate=2.0), [], 10.0)
    assert fr.eval(0.0) == 5.0
    assert fr.eval(3.0) == 11.0
    assert fr.total() == 25.0


def test_jump_is_closed_on_the_left():
    spec = DemandSpec(beta0=1.0, rate=0.0, external_jumps=((4.0, 10.0),))
    fr = merge_breakpoints(spec, [], 10.0)
    assert fr.eval(4.0 - 1e-9) == 1.0
    assert fr.eval(4.0) == 11.0        # jump at exactly t counts


def test_coincident_jumps_merge_additively():
    spec = DemandSpec(beta0=0.0, rate=0.0, external_jumps=((2.0, 3.0),))
    internal = [InternalJumpSchedule("S", ((2.0, 4.0), (5.0, 1.0)))]
    fr = merge_breakpoints(spec, internal, 10.0)
    assert fr.breakpoints == (2.0, 5.0)
    assert fr.cumulative == (7.0, 8.0)


def test_jump_at_time_zero_folds_into_base():
    internal = [InternalJumpSchedule("S", ((0.0, 4.0),))]
    fr = merge_breakpoints(DemandSpec(2.0, 1.0), internal, 10.0)
    assert fr.beta0 == 6.0
    assert fr.breakpoints == ()


def test_zero_and_roundoff_jumps_dropped():
    internal = [InternalJumpSchedule("S", ((3.0, 0.0), (4.0, -1e-13)))]
    fr = merge_breakpoints(DemandSpec(0.0, 0.0), internal, 10.0)
    assert fr.breakpoints == ()


def test_truly_negative_jump_rejected():
    internal = [InternalJumpSchedule("S", ((3.0, -0.5),))]
    with pytest.raises(ValueError):
        merge_breakpoints(DemandSpec(0.0, 0.0), internal, 10.0)


def test_eval_outside_horizon_rejected():
    fr = merge_breakpoints(DemandSpec(0.0, 1.0), [], 10.0)
    with pytest.raises(ValueError):
        fr.eval(10.5)


@given(
    beta0=st.floats(0, 50),
    rate=st.floats(0, 10),
    jumps=st.lists(
        st.tuples(st.floats(0.01, 9.9), st.floats(0, 20)),
        max_size=6),
    t=st.floats(0, 10),
)
@settings(max_examples=200, deadline=None)
def test_monotone_nondecreasing_in_time(beta0, rate, jumps, t):
    spec = DemandSpec(beta0=beta0, rate=rate)
    fr = merge_breakpoints(spec, [InternalJumpSchedule("S", tuple(jumps))],
                           10.0)
    t2 = min(t + 0.7, 10.0)
    assert fr.eval(t2) >= fr.eval(t) - 1e-9


@given(
    jumps=st.lists(
        st.tuples(st.floats(0.01, 9.9), st.floats(0, 20)),
        min_size=1, max_size=6),
    t=st.floats(0, 10),
)
@settings(max_examples=200, deadline=None)
def test_jump_mass_additivity(jumps, t):
    """Value = base + sum of jump masses at instants <= t."""
    fr = merge_breakpoints(DemandSpec(3.0, 2.0),
                           [InternalJumpSchedule("S", tuple(jumps))], 10.0)
    expect = 3.0 + 2.0 * t + sum(s for tt, s in jumps if tt <= t)
    assert fr.eval(t) == pytest.approx(expect, abs=1e-9)


def _toy_plan(line_id, kinds, t1s, f_rows):
    trips = []
    for kind, t1, f in zip(kinds, t1s, f_rows):
        n = len(f)
        trips.append(TripPlan(kind=kind, capacity=50 if kind != "fake" else 0,
                              t1=t1, w=0.0, f=tuple(f), g=(0.0,) * n,
                              h=(0.0,) * n, x=(0.0,) * n, demand=(0.0,) * n))
    return LinePlanSolution(line_id=line_id, trips=tuple(trips),
                            objective=0.0)


def test_induced_jumps_times_and_sizes():
    scen = validate_scenario(coupled_toy_raw())
    src = scen.line("A")
    # trips leave the head at 0 and 10; boardings 10 at s1, 4 at s2
    plan = _toy_plan("A", ["whole", "whole"], [0.0, 10.0],
                     [[10.0, 4.0, 0.0, 0.0]] * 2)
    sched = internal_jumps_from_solution(scen.line("B"), 3, plan, src,
                                         tau=0.3)
    # arrival at station 3 = t1 + d1 + e2 + d2 (departure minus stop time)
    arrive = 0.0 + 2.0 + 0.5 + 1.0
    assert sched.jumps[0][0] == pytest.approx(arrive)
    assert sched.jumps[1][0] == pytest.approx(arrive + 10.0)
    # unload at s3: p13 * 10 + p23 * 4 = 0.3*10 + 0.5*4 = 5; times tau
    assert sched.jumps[0][1] == pytest.approx(0.3 * 5.0)


def test_fake_trips_contribute_zero_size():
    scen = validate_scenario(coupled_toy_raw())
    plan = _toy_plan("A", ["whole", "fake"], [0.0, 0.0],
                     [[10.0, 4.0, 0.0, 0.0], [0.0] * 4])
    sched = internal_jumps_from_solution(scen.line("B"), 3, plan,
                                         scen.line("A"), tau=0.3)
    assert sched.jumps[1][1] == 0.0
