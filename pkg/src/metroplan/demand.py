"""Time-dependent cumulative passenger demand at a station.

The demand at instant t is an affine base (initial passengers plus a
constant arrival rate) plus a step function of block arrivals: external
jumps known in advance, and internal jumps caused by trains of other lines
unloading transfer passengers.  A jump occurring exactly at t counts as
arrived by t (closed-left convention, shared with the MILP encoding).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class DemandSpec:
    """External demand at one station: affine base plus known block arrivals."""

    beta0: float
    rate: float
    external_jumps: Tuple[Tuple[float, float], ...] = ()  # (time, size), sorted


@dataclass(frozen=True)
class InternalJumpSchedule:
    """Block arrivals induced by one other line's trains at an interchange."""

    source_line: str
    jumps: Tuple[Tuple[float, float], ...]  # (time, size), non-decreasing times


@dataclass(frozen=True)
class FrozenDemand:
    """Demand with every jump source merged, ready for O(log n) evaluation."""

    beta0: float
    rate: float
    t_hat: float
    breakpoints: Tuple[float, ...]       # strictly increasing, in (0, t_hat)
    cumulative: Tuple[float, ...]        # prefix-summed jump mass at each breakpoint

    def eval(self, t: float) -> float:
        if not -1e-12 <= t <= self.t_hat + 1e-9:
            raise ValueError(f"t={t} outside extended horizon [0, {self.t_hat}]")
        total = self.beta0 + self.rate * t
        idx = bisect.bisect_right(self.breakpoints, t)
        if idx:
            total += self.cumulative[idx - 1]
        return total

    def total(self) -> float:
        """Demand accumulated by the end of the extended horizon."""
        return self.eval(self.t_hat)


def merge_breakpoints(spec: DemandSpec, internal, t_hat: float) -> FrozenDemand:
    """Merge external and internal jump schedules into one frozen function.

    Coincident jump times are merged additively; zero-size jumps (fake
    trips) are dropped.
    """
    events = list(spec.external_jumps)
    for sched in internal:
        events.extend(sched.jumps)
    merged = {}
    base = spec.beta0
    for t, size in events:
        if size < -1e-9:
            raise ValueError(f"negative jump size {size} at t={t}")
        if size <= 1e-12:    # zero-size (fake trips) or solver round-off
            continue
        if t <= 0.0:
            base += size  # already present at the start of the horizon
            continue
        merged[t] = merged.get(t, 0.0) + size
    times = sorted(merged)
    cum, acc = [], 0.0
    for t in times:
        acc += merged[t]
        cum.append(acc)
    return FrozenDemand(
        beta0=base, rate=spec.rate, t_hat=t_hat,
        breakpoints=tuple(times), cumulative=tuple(cum),
    )


def internal_jumps_from_solution(line_spec, station: int, source_plan,
                                 source_spec, tau: float) -> InternalJumpSchedule:
    """Jump schedule at (line, station) induced by a solved source line.

    One breakpoint per source trip, at the train's arrival instant; the
    size is tau times the passengers it unloads there.  Fake trips
    contribute zero-size breakpoints.
    """
    del line_spec  # target side only names the schedule; sizes come from the source
    i = station
    if not 1 <= i <= source_spec.n_stations:
        raise ValueError(f"station {i} is not on line {source_spec.id}")
    from .domain import station_offsets  # local import avoids a cycle

    offsets = station_offsets(source_spec)
    e_i = source_spec.e[i - 1]
    in_st = source_spec.in_short_turn(i)
    jumps = []
    for trip in source_plan.trips:
        w = trip.w if in_st else 0.0
        t_dep = trip.t1 + offsets[i - 1] + w
        size = 0.0
        for j in range(1, i):
            size += source_spec.p[j - 1][i - 1] * trip.f[j - 1]
            if in_st and source_spec.in_short_turn(j):
                size += source_spec.p[j - 1][i - 1] * trip.g[j - 1]
        jumps.append((t_dep - e_i, tau * size))
    return InternalJumpSchedule(source_line=source_spec.id, jumps=tuple(jumps))


def freeze_network_demand(scenario, plans):
    """Frozen demand per (line, station) given solved plans of other lines.

    ``plans`` maps line id to a LinePlanSolution (or is missing / None for
    unsolved lines, which then contribute no internal jumps).
    """
    frozen = {}
    for ln in scenario.lines:
        t_hat = scenario.t_hat[ln.id]
        per_station = []
        for i in ln.stations:
            spec = scenario.demand[ln.id][i - 1]
            internal = []
            for src_id, src_station, tau in scenario.transfer_feeds(ln.id, i):
                plan = plans.get(src_id)
                if plan is None:
                    continue
                src_spec = scenario.line(src_id)
                internal.append(internal_jumps_from_solution(
                    ln, src_station, plan, src_spec, tau))
            per_station.append(merge_breakpoints(spec, internal, t_hat))
        frozen[ln.id] = tuple(per_station)
    return frozen
