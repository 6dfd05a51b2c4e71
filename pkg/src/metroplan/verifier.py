"""Formulation-independent checks of line plans.

``replay_flows`` re-derives passenger flows for a fixed trip skeleton by
walking the boarding/alighting recursions directly on the demand curves,
with no optimization model involved.  ``check_solution`` verifies a full
network solution against every operational rule, recomputing the transfer
jumps each line induces on the others from the solution itself.
``brute_force_optimum`` enumerates all binary assignments of a small model
and solves the continuous remainder, serving as an independent optimality
oracle for the branch-and-bound engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .bnb import MilpModel, compile_model
from .demand import FrozenDemand, freeze_network_demand
from .domain import (LineSpec, NetworkScenario, dist_head_to_shortturn,
                     kappa, station_offsets)
from .formulation import objective_breakdown
from .simplex import solve_lp
from .solution import (FAKE, SHORT, WHOLE, LinePlanSolution, NetworkSolution,
                       TripPlan)


@dataclass(frozen=True)
class TripSkeleton:
    """Kind, capacity and timing of one trip; flows are derived."""

    kind: str
    capacity: int
    t1: float
    w: float = 0.0


def _frac_past(line: LineSpec, r: int, i: int) -> float:
    """Fraction of boarders at r still riding when the train leaves i.

    Complement accounting: whoever has not alighted at some station up to
    i stays aboard (and keeps a seat) until the end of the trip.
    """
    gone = sum(line.p[r - 1][j - 1] for j in range(r + 1, i + 1))
    return max(0.0, 1.0 - gone)


def replay_flows(line: LineSpec, frozen: Sequence[FrozenDemand],
                 skeleton: Sequence[TripSkeleton], alpha: float) -> List[TripPlan]:
    """Greedy passenger replay for a fixed trip skeleton.

    Every trip boards as many waiting passengers as its residual capacity
    allows, station by station; leftover passengers become surplus, of
    which a fraction alpha waits for the next trip.  Fake trips must carry
    the timing of the trip they copy.
    """
    n = line.n_stations
    st = line.short_turn
    off = station_offsets(line)
    trips: List[TripPlan] = []
    h_prev = [0.0] * n
    d_prev = [0.0] * n
    for k, sk in enumerate(skeleton, start=1):
        f = [0.0] * n
        g = [0.0] * n
        h = [0.0] * n
        x = [0.0] * n
        dv = [0.0] * n
        for i in range(1, n + 1):
            in_sec = st is not None and st.first <= i <= st.last
            t = sk.t1 + off[i - 1] + (sk.w if in_sec else 0.0)
            dv[i - 1] = frozen[i - 1].eval(t)
            if k == 1:
                avail = dv[i - 1]
            else:
                avail = dv[i - 1] - d_prev[i - 1] + alpha * h_prev[i - 1]
            avail = max(0.0, avail)
            if sk.kind == WHOLE:
                onboard = sum(f[r - 1] * _frac_past(line, r, i)
                              for r in range(1, i))
                f[i - 1] = max(0.0, min(avail, sk.capacity - onboard))
            elif sk.kind == SHORT and st is not None and st.first <= i < st.last:
                onboard = sum(g[r - 1] * _frac_past(line, r, i)
                              for r in range(st.first, i))
                g[i - 1] = max(0.0, min(avail, sk.capacity - onboard))
            h[i - 1] = avail - f[i - 1] - g[i - 1]
            if st is not None and i == st.last:
                h[i - 1] += sum(g[r - 1] * _frac_past(line, r, st.last)
                                for r in range(st.first, st.last))
            if in_sec and i != st.last:
                served = sk.kind in (WHOLE, SHORT)
            else:
                served = sk.kind == WHOLE
            x[i - 1] = h[i - 1] if served else 0.0
        trips.append(TripPlan(kind=sk.kind, capacity=sk.capacity, t1=sk.t1,
                              w=sk.w if sk.kind == SHORT else 0.0,
                              f=tuple(f), g=tuple(g), h=tuple(h), x=tuple(x),
                              demand=tuple(dv)))
        h_prev = h
        d_prev = dv
    return trips


def replay_line_plan(line: LineSpec, frozen: Sequence[FrozenDemand],
                     skeleton: Sequence[TripSkeleton], params) -> LinePlanSolution:
    trips = replay_flows(line, frozen, skeleton, params.alpha)
    plan = LinePlanSolution(line_id=line.id, trips=tuple(trips), objective=0.0)
    total = objective_breakdown(plan, line, params)["total"]
    return LinePlanSolution(line_id=line.id, trips=tuple(trips), objective=total)


# ---------------------------------------------------------------------------
# Full-solution verification


def _demand_candidates(fr: FrozenDemand, t: float, tol: float) -> List[float]:
    """Admissible cumulative-demand values at t.

    At a step instant both the pre-jump and post-jump readings are valid
    interval selections, so a solver may report either.
    """
    vals = [fr.eval(min(max(t, 0.0), fr.t_hat))]
    for idx, bp in enumerate(fr.breakpoints):
        if abs(bp - t) <= tol:
            base = fr.beta0 + fr.rate * t
            prev_cum = fr.cumulative[idx - 1] if idx else 0.0
            vals.append(base + prev_cum)
            vals.append(base + fr.cumulative[idx])
    return vals


def check_solution(scenario: NetworkScenario, solution: NetworkSolution,
                   tol: float = 1e-6) -> Tuple[bool, List[str]]:
    """Verify a network solution against every operational rule.

    The demand each line faces is recomputed from the solution itself, so
    transfer jumps are required to be mutually consistent across lines.
    Returns (ok, violations).
    """
    errs: List[str] = []
    plans = dict(solution.lines)
    frozen_all = freeze_network_demand(scenario, plans)
    params = scenario.globals
    T = params.horizon
    abs_tol = max(tol, 1e-6)

    def bad(msg):
        errs.append(msg)

    total = 0.0
    for line in scenario.lines:
        lid = line.id
        plan = plans.get(lid)
        if plan is None:
            bad(f"{lid}: no plan")
            continue
        frozen = frozen_all[lid]
        n = line.n_stations
        st = line.short_turn
        off = station_offsets(line)
        kbar = line.max_trips
        trips = plan.trips
        if len(trips) != kbar:
            bad(f"{lid}: expected {kbar} trips, got {len(trips)}")
            continue

        # --- trip structure
        if trips[-1].kind != WHOLE:
            bad(f"{lid}: last trip must be a whole trip")
        if st is None:
            if trips[0].kind != WHOLE:
                bad(f"{lid}: first trip must be a whole trip")
            if any(t.kind == SHORT for t in trips):
                bad(f"{lid}: section trip on a line without a short-turn")
        else:
            if trips[0].kind == FAKE:
                bad(f"{lid}: service must open with a real trip")
            kp = kappa(line)
            first_short = trips[0].kind == SHORT
            if first_short and trips[kp - 1].kind != WHOLE:
                bad(f"{lid}: trip {kp} must be whole after an opening section trip")
            if not first_short and trips[kp - 1].kind == WHOLE:
                bad(f"{lid}: trip {kp} may not be whole unless the service "
                    f"opened with a section trip")
            if first_short and trips[kp - 1].t1 > abs_tol:
                bad(f"{lid}: the merge whole trip must leave the head at 0")
        for k, t in enumerate(trips, 1):
            if t.is_true and t.capacity not in line.capacities:
                bad(f"{lid} trip {k}: capacity {t.capacity} not offered")
            if not t.is_true and (t.capacity
                                  or any(abs(v) > abs_tol for v in t.f)
                                  or any(abs(v) > abs_tol for v in t.g)):
                bad(f"{lid} trip {k}: fake trip carries flow or capacity")

        # --- timing
        if abs(trips[0].t1) > abs_tol:
            bad(f"{lid}: first head departure must be 0")
        if abs(trips[-1].t1 - T) > abs_tol:
            bad(f"{lid}: last head departure must be {T}")
        head = dist_head_to_shortturn(line) if st else 0.0
        for k in range(2, kbar + 1):
            t, tp = trips[k - 1], trips[k - 2]
            dt = t.t1 - tp.t1
            if dt < -abs_tol:
                bad(f"{lid} trip {k}: head departures decrease")
            if t.kind == WHOLE:
                if st is not None and k == kappa(line):
                    pass   # merge trip follows the section ladder instead
                elif dt < line.safety_interval - abs_tol:
                    bad(f"{lid} trip {k}: headway {dt:.4f} below "
                        f"{line.safety_interval}")
            elif dt > abs_tol:
                bad(f"{lid} trip {k}: non-whole trip must copy the head time")
            if st is not None:
                ds = (t.t1 + t.w) - (tp.t1 + tp.w)
                if t.kind in (WHOLE, SHORT):
                    if ds < line.safety_interval - abs_tol:
                        bad(f"{lid} trip {k}: section headway {ds:.4f} below "
                            f"{line.safety_interval}")
                    if ds > T + head + abs_tol:
                        bad(f"{lid} trip {k}: section headway above horizon")
                elif abs(ds) > abs_tol:
                    bad(f"{lid} trip {k}: fake trip must copy section times")
        for k, t in enumerate(trips, 1):
            if t.kind == WHOLE and abs(t.w) > abs_tol:
                # fake trips may carry a copied shift; whole trips may not
                bad(f"{lid} trip {k}: time shift on a whole trip")
            if st is not None and t.w < -head - abs_tol:
                bad(f"{lid} trip {k}: section departs before instant 0")

        # --- flows against recomputed demand
        h_prev = [0.0] * n
        d_prev = [0.0] * n
        for k, t in enumerate(trips, 1):
            q = float(t.capacity)
            for i in range(1, n + 1):
                in_sec = st is not None and st.first <= i <= st.last
                ti = t.t1 + off[i - 1] + (t.w if in_sec else 0.0)
                cands = _demand_candidates(frozen[i - 1], ti, abs_tol)
                d_here = t.demand[i - 1]
                if not any(abs(d_here - c) <= abs_tol + 1e-9 * abs(c)
                           for c in cands):
                    bad(f"{lid} trip {k} station {i}: demand {d_here:.6f} "
                        f"does not match the curve at t={ti:.6f} "
                        f"(expected one of {cands})")
                if k == 1:
                    avail = d_here
                else:
                    avail = (d_here - d_prev[i - 1]
                             + params.alpha * h_prev[i - 1])
                fv, gv = t.f[i - 1], t.g[i - 1]
                if fv < -abs_tol or gv < -abs_tol:
                    bad(f"{lid} trip {k} station {i}: negative boarding")
                if fv + gv > avail + abs_tol:
                    bad(f"{lid} trip {k} station {i}: boards "
                        f"{fv + gv:.6f} > waiting {avail:.6f}")
                if (abs(gv) > abs_tol
                        and not (in_sec and i != st.last
                                 and t.kind == SHORT)):
                    bad(f"{lid} trip {k} station {i}: section boarding "
                        f"outside a section trip")
                if t.kind == WHOLE:
                    onboard = sum(t.f[r - 1] * _frac_past(line, r, i)
                                  for r in range(1, i))
                    if fv + onboard > q + abs_tol:
                        bad(f"{lid} trip {k} station {i}: load "
                            f"{fv + onboard:.6f} exceeds capacity {q}")
                elif fv > abs_tol:
                    bad(f"{lid} trip {k} station {i}: whole-route boarding "
                        f"on a non-whole trip")
                if t.kind == SHORT and in_sec and i != st.last:
                    onboard = sum(t.g[r - 1] * _frac_past(line, r, i)
                                  for r in range(st.first, i))
                    if gv + onboard > q + abs_tol:
                        bad(f"{lid} trip {k} station {i}: section load "
                            f"{gv + onboard:.6f} exceeds capacity {q}")
                h_expect = avail - fv - gv
                if st is not None and i == st.last:
                    h_expect += sum(
                        t.g[r - 1] * _frac_past(line, r, st.last)
                        for r in range(st.first, st.last))
                if abs(t.h[i - 1] - h_expect) > abs_tol * 10:
                    bad(f"{lid} trip {k} station {i}: surplus {t.h[i - 1]:.6f}"
                        f" != recursion value {h_expect:.6f}")
                if in_sec and i != st.last:
                    served = t.kind in (WHOLE, SHORT)
                else:
                    served = t.kind == WHOLE
                if served and t.x[i - 1] < t.h[i - 1] - abs_tol * 10:
                    bad(f"{lid} trip {k} station {i}: non-served flow "
                        f"{t.x[i - 1]:.6f} below surplus {t.h[i - 1]:.6f}")
                if t.x[i - 1] < -abs_tol:
                    bad(f"{lid} trip {k} station {i}: negative non-served flow")
            h_prev = list(t.h)
            d_prev = list(t.demand)

        try:
            breakdown = objective_breakdown(plan, line, params)
        except (KeyError, ValueError) as exc:
            # structural errors (e.g. unknown capacity) were reported above
            bad(f"{lid}: objective not recomputable: {exc}")
            continue
        if abs(breakdown["total"] - plan.objective) > max(abs_tol * 100, 1e-4):
            bad(f"{lid}: stored objective {plan.objective:.6f} != recomputed "
                f"{breakdown['total']:.6f}")
        total += breakdown["total"]

    if abs(total - solution.objective) > max(abs_tol * 100, 1e-4):
        bad(f"network objective {solution.objective:.6f} != sum of line "
            f"objectives {total:.6f}")
    return (not errs, errs)


# ---------------------------------------------------------------------------
# Brute-force oracle


def brute_force_optimum(model: MilpModel, max_binaries: int = 24):
    """Exhaustive search over binary assignments, LP for the remainder.

    Returns (objective, values) for the best assignment or (None, None)
    when no assignment is feasible.  Subtrees whose fixed part already
    contradicts some row's activity range are pruned without an LP solve.
    """
    ints = list(model.integer_indices)
    for j in ints:
        v = model.variables[j]
        if v.lb < -1e-9 or v.ub > 1 + 1e-9:
            raise ValueError(f"{v.name}: oracle handles binary variables only")
    if len(ints) > max_binaries:
        raise ValueError(f"{len(ints)} binaries exceed the oracle cap "
                         f"{max_binaries}")
    comp = compile_model(model)
    if comp.trivially_infeasible:
        return None, None
    A, b = comp.A, comp.b
    pos = np.clip(A, 0.0, None)
    neg = np.clip(A, None, 0.0)
    lb = comp.lb.copy()
    ub = comp.ub.copy()
    best = [None, None]

    def rows_possible():
        act_lo = pos @ lb + neg @ ub
        act_hi = pos @ ub + neg @ lb
        return bool(np.all(act_lo <= b + 1e-7) and np.all(act_hi >= b - 1e-7))

    def rec(pos_idx):
        if not rows_possible():
            return
        if pos_idx == len(ints):
            sol = solve_lp(A, b, comp.c, lb, ub)
            if sol.status == "optimal":
                if best[0] is None or sol.objective < best[0] - 1e-12:
                    best[0] = sol.objective
                    best[1] = sol.x[:comp.n_structural].copy()
            return
        j = ints[pos_idx]
        lo, hi = lb[j], ub[j]
        for val in (0.0, 1.0):
            if val < lo - 1e-9 or val > hi + 1e-9:
                continue
            lb[j] = ub[j] = val
            rec(pos_idx + 1)
        lb[j], ub[j] = lo, hi

    rec(0)
    if best[0] is None:
        return None, None
    values = {v.name: float(best[1][i]) for i, v in enumerate(model.variables)}
    return best[0] + model.objective_offset, values
