"""Block-iteration optimization of a whole network, one line at a time.

Each pass solves every line's model exactly against the demand induced by
the other lines' current plans, immediately propagating each new plan to
the lines solved later in the same pass.  A line whose induced demand did
not change since its last solve is skipped (its model would be identical).
The loop stops when every line's objective moved by less than a relative
tolerance between consecutive passes, or after a fixed number of passes.

Because a line solved early in the final pass saw slightly stale transfer
arrivals, the accepted trip structure is re-evaluated at the end with one
network-consistent continuous solve (``build_conditional_lp``), which
couples all lines' times and flows exactly at the fixed structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .bnb import BnbOptions, solve_milp
from .demand import freeze_network_demand
from .domain import NetworkScenario
from .formulation import (binary_assignment, build_conditional_lp,
                          build_line_model, extract_line_plan,
                          objective_breakdown)
from .solution import LinePlanSolution, NetworkSolution, SolveReport


@dataclass
class HeuristicOptions:
    epsilon: float = 1e-3           # relative per-line stabilization tolerance
    max_iterations: int = 5
    with_cuts: bool = True
    refine: bool = True             # network-consistent re-solve at the end
    bnb: BnbOptions = field(default_factory=BnbOptions)


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    line_id: str
    objective: float
    deviation: Optional[float]      # None on the first solve of a line
    skipped: bool
    status: str
    nodes: int
    wall_time: float


def stabilization_deviation(prev: Optional[float], new: float) -> Optional[float]:
    """Relative objective movement, absolute when the baseline is ~zero."""
    if prev is None:
        return None
    denom = abs(prev)
    if denom < 1e-12:
        return abs(new - prev)
    return abs(new - prev) / denom


def _demand_fingerprint(frozen) -> Tuple:
    return tuple((f.beta0, f.rate, f.breakpoints, f.cumulative) for f in frozen)


def optimize_network(scenario: NetworkScenario,
                     options: Optional[HeuristicOptions] = None) -> NetworkSolution:
    """Run the block iteration and return a network-consistent solution."""
    opt = options or HeuristicOptions()
    plans: Dict[str, LinePlanSolution] = {}
    warm: Dict[str, Mapping[str, float]] = {}
    fingerprints: Dict[str, Tuple] = {}
    trace: List[IterationTrace] = []
    total_nodes = 0
    total_time = 0.0
    stable = False

    for it in range(1, opt.max_iterations + 1):
        worst = 0.0
        for line in scenario.lines:
            lid = line.id
            frozen = freeze_network_demand(scenario, plans)[lid]
            fp = _demand_fingerprint(frozen)
            if lid in plans and fingerprints.get(lid) == fp:
                trace.append(IterationTrace(it, lid, plans[lid].objective,
                                            0.0, True, "unchanged", 0, 0.0))
                continue
            model = build_line_model(line, frozen, scenario.globals,
                                     with_cuts=opt.with_cuts)
            res = solve_milp(model, opt.bnb, warm_start=warm.get(lid))
            if res.objective is None:
                raise RuntimeError(
                    f"line {lid} solve ended {res.status} in pass {it}")
            plan = extract_line_plan(res.values, line, scenario.globals)
            prev = plans[lid].objective if lid in plans else None
            dev = stabilization_deviation(prev, plan.objective)
            plans[lid] = plan
            warm[lid] = binary_assignment(res.values, model)
            fingerprints[lid] = fp
            total_nodes += res.nodes
            total_time += res.wall_time
            trace.append(IterationTrace(it, lid, plan.objective, dev, False,
                                        res.status, res.nodes, res.wall_time))
            worst = max(worst, dev if dev is not None else math.inf)
        if worst < opt.epsilon:
            stable = True
            break

    objective = sum(p.objective for p in plans.values())
    report = SolveReport(status="stable" if stable else "iteration-limit",
                         objective=objective, best_bound=None, gap=None,
                         nodes=total_nodes, wall_time=total_time)
    solution = NetworkSolution(lines=plans, objective=objective,
                               report=report, trace=tuple(trace))
    needs_refine = any(
        scenario.transfer_feeds(ln.id, i)
        for ln in scenario.lines for i in ln.stations)
    if opt.refine and needs_refine:
        solution = refine_consistent(scenario, solution, opt.bnb)
    return solution


def _retimed(line, plan: LinePlanSolution,
             values: Mapping[str, float]) -> LinePlanSolution:
    """Plan with its clocks replaced by the given solver values."""
    from dataclasses import replace

    from .solution import WHOLE

    trips = []
    for k, t in enumerate(plan.trips, 1):
        t1 = values[f"t1[{line.id},{k}]"]
        w = values.get(f"w[{line.id},{k}]", 0.0) if t.kind != WHOLE else 0.0
        trips.append(replace(t, t1=t1, w=w))
    return replace(plan, trips=tuple(trips))


def refine_consistent(scenario: NetworkScenario, solution: NetworkSolution,
                      bnb_options: Optional[BnbOptions] = None) -> NetworkSolution:
    """Re-optimize all continuous quantities at the solution's structure.

    Times and flows of every line are coupled in one model, so the result
    is exactly consistent across transfer arrivals (the per-line passes
    can leave small inconsistencies on coupled networks).
    """
    opt = bnb_options or BnbOptions()
    plans = dict(solution.lines)
    res = None
    for attempt in range(5):
        model = build_conditional_lp(scenario, plans)
        res = solve_milp(model, opt)
        if res.objective is not None:
            break
        # per-line passes can pin cross-line arrival orders no timetable
        # satisfies; solve with soft pins, move the plan clocks to the
        # nearest consistent times, and rebuild the pins from those
        elastic = build_conditional_lp(scenario, plans, elastic=True)
        eres = solve_milp(elastic, opt)
        if eres.objective is None:
            raise RuntimeError(f"consistent re-solve ended {res.status}")
        plans = {lid: _retimed(scenario.line(lid), plan, eres.values)
                 for lid, plan in plans.items()}
    if res is None or res.objective is None:
        raise RuntimeError(f"consistent re-solve ended {res.status}")
    new_plans: Dict[str, LinePlanSolution] = {}
    for line in scenario.lines:
        old = solution.lines[line.id]
        values = dict(res.values)
        # kinds and capacities come from the accepted structure
        for k, t in enumerate(old.trips, 1):
            for q in line.capacities:
                values[f"y[{line.id},{k},{q}]"] = (
                    1.0 if (t.kind == "whole" and t.capacity == q) else 0.0)
                if line.short_turn is not None:
                    values[f"yS[{line.id},{k},{q}]"] = (
                        1.0 if (t.kind in ("whole", "short")
                                and t.capacity == q) else 0.0)
        new_plans[line.id] = extract_line_plan(values, line, scenario.globals)
    objective = sum(p.objective for p in new_plans.values())
    old_rep = solution.report
    report = SolveReport(
        status=old_rep.status if old_rep else "stable",
        objective=objective, best_bound=None, gap=None,
        nodes=(old_rep.nodes if old_rep else 0) + res.nodes,
        wall_time=(old_rep.wall_time if old_rep else 0.0) + res.wall_time)
    return NetworkSolution(lines=new_plans, objective=objective,
                           report=report, trace=solution.trace)
