"""Mixed-integer models for line plans with time-dependent demand.

``build_line_model`` produces the model for a single directed line whose
station demand has been frozen (other lines' transfer arrivals appear as
fixed jumps).  ``build_joint_model`` couples every line of a scenario in
one model, representing transfer arrival times and volumes of the other
lines as decision-dependent quantities via product-envelope
linearizations; it is intended for tiny instances only and refuses to
build once the binary count passes a cap.

Conventions shared by both builders:

* trips are indexed k = 1..max_trips; a trip is either a whole trip
  (one capacity binary y set), a section-only trip on the short-turn
  section (yS set, y clear) or a fake trip (all clear) whose times copy
  the previous trip so that fewer than max_trips real departures fit in
  a fixed-length trip ladder;
* cumulative demand D at an evaluation point is an affine function of
  the departure time plus the mass of step arrivals that have already
  occurred, selected by interval-membership binaries;
* passengers left behind accumulate as a surplus h that re-enters the
  next trip's availability scaled by the returning fraction alpha, and
  the surplus of served stations is charged as non-served flow x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .bnb import EQUAL, GREATER, LESS, MilpModel
from .demand import FrozenDemand, freeze_network_demand
from .domain import (GlobalParams, LineSpec, NetworkScenario,
                     dist_head_to_shortturn, kappa, station_offsets)

DEFAULT_JOINT_BINARY_CAP = 60


# ---------------------------------------------------------------------------
# Big-M policy


def compute_big_m(line: LineSpec, frozen: Sequence[FrozenDemand],
                  transfer_extra: Optional[Mapping[int, float]] = None) -> List[float]:
    """Upper bound on passengers that can ever be waiting at each station.

    The frozen demand at the end of the extended horizon bounds external
    arrivals; at the short-turn tail station, section passengers bound for
    beyond the section alight and rejoin the platform, adding at most one
    train-load per trip.  ``transfer_extra`` adds per-station slack for
    decision-dependent transfer volumes in the joint model.
    """
    M = [fr.eval(fr.t_hat) for fr in frozen]
    st = line.short_turn
    if st is not None:
        M[st.last - 1] += line.max_trips * max(line.capacities)
    if transfer_extra:
        for i, extra in transfer_extra.items():
            M[i - 1] += extra
    return M


# ---------------------------------------------------------------------------
# Variable handles


@dataclass
class LineVars:
    """Indices of one line's variables inside a shared model."""

    t1: Dict[int, int] = field(default_factory=dict)           # k -> idx
    w: Dict[int, int] = field(default_factory=dict)            # k -> idx
    y: Dict[Tuple[int, int], int] = field(default_factory=dict)    # (k, q) -> idx
    yS: Dict[Tuple[int, int], int] = field(default_factory=dict)   # (k, q) -> idx
    f: Dict[Tuple[int, int], int] = field(default_factory=dict)    # (k, i) -> idx
    g: Dict[Tuple[int, int], int] = field(default_factory=dict)
    h: Dict[Tuple[int, int], int] = field(default_factory=dict)
    x: Dict[Tuple[int, int], int] = field(default_factory=dict)
    D: Dict[Tuple[int, int], int] = field(default_factory=dict)
    big_m: List[float] = field(default_factory=list)


def _trip_weight(params: GlobalParams, k: int, kbar: int) -> float:
    base = params.alpha * params.mu1 + (1.0 - params.alpha) * params.mu2
    if k == kbar:
        base *= params.last_trip_mu_multiplier
    return base


def still_aboard(line: LineSpec, r: int, i: int) -> float:
    """Fraction of boarders at r still aboard when the train leaves i.

    The complement of everything alighted at stations up to i; boarders
    whose alighting shares do not add up to one ride on to the end of the
    trip and keep occupying a seat until then.
    """
    gone = sum(line.p[r - 1][j - 1] for j in range(r + 1, i + 1))
    return max(0.0, 1.0 - gone)


def _reward_coefficients(line: LineSpec):
    """Per-passenger reward earned by a boarding at each station.

    Whole-trip boardings at r are rewarded per destination share, with
    riders whose shares do not add up to one credited at the terminal;
    section boardings are rewarded inside the section, and everyone still
    aboard at the section tail is credited there, where they alight.
    """
    n = line.n_stations
    coef_f = [0.0] * (n + 1)
    for r in range(1, n + 1):
        coef_f[r] = sum(line.gamma[r - 1][j - 1] * line.p[r - 1][j - 1]
                        for j in range(r + 1, n + 1))
        if r < n:
            coef_f[r] += line.gamma[r - 1][n - 1] * still_aboard(line, r, n)
    coef_g = {}
    st = line.short_turn
    if st is not None:
        for r in range(st.first, st.last):
            inside = sum(line.gamma[r - 1][j - 1] * line.p[r - 1][j - 1]
                         for j in range(r + 1, st.last + 1))
            beyond = line.gamma[r - 1][st.last - 1] * still_aboard(
                line, r, st.last)
            coef_g[r] = inside + beyond
    return coef_f, coef_g


def _declare_line_vars(m: MilpModel, line: LineSpec, params: GlobalParams,
                       big_m: Sequence[float]) -> LineVars:
    lid = line.id
    n = line.n_stations
    kbar = line.max_trips
    T = params.horizon
    st = line.short_turn
    qmax = max(line.capacities)
    coef_f, coef_g = _reward_coefficients(line)
    lv = LineVars(big_m=list(big_m))

    for k in range(1, kbar + 1):
        lo = T if k == kbar else 0.0
        hi = 0.0 if k == 1 else T
        lv.t1[k] = m.add_var(f"t1[{lid},{k}]", lo, hi)
    if st is not None:
        head = dist_head_to_shortturn(line)
        for k in range(1, kbar + 1):
            lv.w[k] = m.add_var(f"w[{lid},{k}]", -head, T + head)
    for k in range(1, kbar + 1):
        for qi, q in enumerate(line.capacities):
            cost = line.trip_cost[qi]
            if st is not None:
                cost -= st.trip_cost[qi]   # yS carries the section share
            lv.y[(k, q)] = m.add_var(f"y[{lid},{k},{q}]", 0, 1, is_int=True,
                                     obj=cost)
        if st is not None:
            for qi, q in enumerate(line.capacities):
                lv.yS[(k, q)] = m.add_var(f"yS[{lid},{k},{q}]", 0, 1,
                                          is_int=True, obj=st.trip_cost[qi])
    for k in range(1, kbar + 1):
        weight = _trip_weight(params, k, kbar)
        for i in range(1, n + 1):
            Mi = big_m[i - 1]
            lv.f[(k, i)] = m.add_var(f"f[{lid},{k},{i}]", 0.0, min(Mi, qmax),
                                     obj=-coef_f[i])
            if st is not None and st.first <= i < st.last:
                lv.g[(k, i)] = m.add_var(f"g[{lid},{k},{i}]", 0.0, min(Mi, qmax),
                                         obj=-coef_g[i])
            lv.h[(k, i)] = m.add_var(f"h[{lid},{k},{i}]", 0.0, Mi)
            lv.x[(k, i)] = m.add_var(f"x[{lid},{k},{i}]", 0.0, Mi, obj=weight)
            lv.D[(k, i)] = m.add_var(f"D[{lid},{k},{i}]", 0.0, Mi)
    return lv


# ---------------------------------------------------------------------------
# Demand attachment (step arrivals known in advance)


def _attach_frozen_demand(m: MilpModel, lid: str, fr: FrozenDemand,
                          k: int, i: int, t_coeffs: Mapping[int, float],
                          t_const: float, d_idx: int, with_cuts: bool,
                          prev_deltas: Optional[List[int]],
                          extra_eq: Sequence[Tuple[int, float]] = ()):
    """Tie D[...,k,i] to the frozen demand curve evaluated at the trip time.

    Returns the interval-membership binaries (or None when the curve has
    no steps).  ``extra_eq`` adds further (index, coefficient) terms to
    the right-hand side of the demand definition, used by the joint model
    for decision-dependent transfer mass.
    """
    eq = {d_idx: 1.0}
    rhs = fr.beta0 + fr.rate * t_const
    for idx, c in t_coeffs.items():
        eq[idx] = eq.get(idx, 0.0) - fr.rate * c
    for idx, c in extra_eq:
        eq[idx] = eq.get(idx, 0.0) - c
    bps = fr.breakpoints
    R = len(bps)
    deltas = None
    if R:
        deltas = [m.add_var(f"dE[{lid},{k},{i},{r}]", 0, 1, is_int=True)
                  for r in range(R + 1)]
        m.add_constraint(f"dE_one[{lid},{k},{i}]",
                         {d: 1.0 for d in deltas}, EQUAL, 1.0)
        lower = (0.0,) + bps
        upper = bps + (fr.t_hat,)
        row_lo = dict(t_coeffs)
        row_hi = dict(t_coeffs)
        for r, d in enumerate(deltas):
            if lower[r]:
                row_lo[d] = -lower[r]
            row_hi[d] = -upper[r]
        m.add_constraint(f"dE_lo[{lid},{k},{i}]", row_lo, GREATER, -t_const)
        m.add_constraint(f"dE_hi[{lid},{k},{i}]", row_hi, LESS, -t_const)
        cum = (0.0,) + fr.cumulative
        for r, d in enumerate(deltas):
            if cum[r]:
                eq[d] = eq.get(d, 0.0) - cum[r]
        if with_cuts and prev_deltas is not None:
            # departure times never decrease trip to trip, so the interval
            # index can only move right: cumulative selection dominates
            for r in range(R):
                row = {}
                for rr in range(r + 1):
                    row[deltas[rr]] = row.get(deltas[rr], 0.0) + 1.0
                    row[prev_deltas[rr]] = row.get(prev_deltas[rr], 0.0) - 1.0
                m.add_constraint(f"dE_mono[{lid},{k},{i},{r}]", row, LESS, 0.0)
    m.add_constraint(f"Ddef[{lid},{k},{i}]", eq, EQUAL, rhs)
    return deltas


# ---------------------------------------------------------------------------
# Line constraints


def _add_line_constraints(m: MilpModel, line: LineSpec, lv: LineVars,
                          frozen: Sequence[FrozenDemand], params: GlobalParams,
                          with_cuts: bool, demand_hook=None) -> None:
    """All constraint rows of one line.

    ``demand_hook(k, i, t_coeffs, t_const, d_idx, prev_deltas)`` overrides
    the default frozen-demand attachment; it must return the membership
    binaries used for the monotonicity cuts (or None).
    """
    lid = line.id
    n = line.n_stations
    kbar = line.max_trips
    T = params.horizon
    Q = line.capacities
    st = line.short_turn
    off = station_offsets(line)
    alpha = params.alpha

    def ysum(k, coef=1.0):
        return {lv.y[(k, q)]: coef for q in Q}

    def ySsum(k, coef=1.0):
        return {lv.yS[(k, q)]: coef for q in Q}

    # --- trip-activation structure -------------------------------------
    if st is None:
        m.add_constraint(f"first_trip[{lid}]", ysum(1), EQUAL, 1.0)
    else:
        m.add_constraint(f"first_service[{lid}]",
                         {**ysum(1), **ySsum(1)}, GREATER, 1.0)
        m.add_constraint(f"one_cap_short[{lid},1]", ySsum(1), LESS, 1.0)
    m.add_constraint(f"last_trip[{lid}]", ysum(kbar), EQUAL, 1.0)
    for k in range(2, kbar):
        m.add_constraint(f"one_cap[{lid},{k}]", ysum(k), LESS, 1.0)
    kp = None
    if st is not None:
        head = dist_head_to_shortturn(line)
        kp = kappa(line)
        if not 2 <= kp <= kbar:
            raise ValueError(
                f"line {lid}: section lead-in spans {kp - 1} trips, which "
                f"does not fit the trip ladder of {kbar}")
        for k in range(2, kbar + 1):
            m.add_constraint(f"one_cap_short[{lid},{k}]", ySsum(k), LESS, 1.0)
        for k in range(1, kbar + 1):
            for q in Q:
                m.add_constraint(f"whole_covers_section[{lid},{k},{q}]",
                                 {lv.y[(k, q)]: 1.0, lv.yS[(k, q)]: -1.0},
                                 LESS, 0.0)
        # if the service opens with a section trip, the first whole trip is
        # the one that reaches the section after the lead-in; otherwise no
        # whole trip is pinned there
        row = ysum(kp)
        for q in Q:
            row[lv.yS[(1, q)]] = row.get(lv.yS[(1, q)], 0.0) - 1.0
            row[lv.y[(1, q)]] = row.get(lv.y[(1, q)], 0.0) + 1.0
        m.add_constraint(f"merge_trip_whole[{lid}]", row, EQUAL, 0.0)
        row = {lv.t1[kp]: 1.0, **ySsum(1, T)}
        for q in Q:
            row[lv.y[(1, q)]] = row.get(lv.y[(1, q)], 0.0) - T
        m.add_constraint(f"merge_trip_start[{lid}]", row, LESS, T)
        m.add_constraint(f"merge_trip_order[{lid}]",
                         {lv.t1[kp]: 1.0, lv.t1[kp - 1]: -1.0}, GREATER, 0.0)

    # --- headways and time copying --------------------------------------
    for k in range(2, kbar + 1):
        dt = {lv.t1[k]: 1.0, lv.t1[k - 1]: -1.0}
        if not (st is not None and k == kp):
            row = {**ysum(k, line.safety_interval)}
            for idx, c in dt.items():
                row[idx] = row.get(idx, 0.0) - c
            m.add_constraint(f"headway_min[{lid},{k}]", row, LESS, 0.0)
        row = dict(dt)
        for q in Q:
            row[lv.y[(k, q)]] = row.get(lv.y[(k, q)], 0.0) - T
        m.add_constraint(f"headway_max[{lid},{k}]", row, LESS, 0.0)
        if st is not None:
            dts = {lv.t1[k]: 1.0, lv.t1[k - 1]: -1.0,
                   lv.w[k]: 1.0, lv.w[k - 1]: -1.0}
            row = {**ySsum(k, line.safety_interval)}
            for idx, c in dts.items():
                row[idx] = row.get(idx, 0.0) - c
            m.add_constraint(f"section_headway_min[{lid},{k}]", row, LESS, 0.0)
            row = dict(dts)
            for q in Q:
                row[lv.yS[(k, q)]] = row.get(lv.yS[(k, q)], 0.0) - (T + head)
            m.add_constraint(f"section_headway_max[{lid},{k}]", row, LESS, 0.0)
    if st is not None:
        for k in range(1, kbar + 1):
            row = {lv.w[k]: 1.0, **ysum(k, T + head)}
            m.add_constraint(f"shift_ub[{lid},{k}]", row, LESS, T + head)
            row = {lv.w[k]: 1.0, **ysum(k, -head)}
            m.add_constraint(f"shift_lb[{lid},{k}]", row, GREATER, -head)

    # --- flows, demand, surplus ------------------------------------------
    # still-onboard fraction of a boarding at r when the train leaves i:
    # whoever has not alighted somewhere up to i keeps occupying a seat
    def frac_past(r, i):
        return still_aboard(line, r, i)

    prev_deltas: Dict[int, Optional[List[int]]] = {}
    for k in range(1, kbar + 1):
        new_deltas: Dict[int, Optional[List[int]]] = {}
        for i in range(1, n + 1):
            in_sec = st is not None and st.first <= i <= st.last
            t_coeffs = {lv.t1[k]: 1.0}
            if in_sec:
                t_coeffs[lv.w[k]] = 1.0
            t_const = off[i - 1]
            d_idx = lv.D[(k, i)]
            hook = demand_hook or (
                lambda k_, i_, tc, t0, di, pd:
                _attach_frozen_demand(m, lid, frozen[i_ - 1], k_, i_, tc, t0,
                                      di, with_cuts, pd))
            new_deltas[i] = hook(k, i, t_coeffs, t_const, d_idx,
                                 prev_deltas.get(i))

            # capacity: boarders plus everyone still riding fit the train
            row = {lv.f[(k, i)]: 1.0}
            for r in range(1, i):
                c = frac_past(r, i)
                if c:
                    row[lv.f[(k, r)]] = c
            for q in Q:
                row[lv.y[(k, q)]] = row.get(lv.y[(k, q)], 0.0) - float(q)
            m.add_constraint(f"cap[{lid},{k},{i}]", row, LESS, 0.0)
            if st is not None and st.first <= i < st.last:
                row = {lv.g[(k, i)]: 1.0}
                for r in range(st.first, i):
                    c = frac_past(r, i)
                    if c:
                        row[lv.g[(k, r)]] = c
                for q in Q:
                    row[lv.yS[(k, q)]] = row.get(lv.yS[(k, q)], 0.0) - float(q)
                    row[lv.y[(k, q)]] = row.get(lv.y[(k, q)], 0.0) + float(q)
                m.add_constraint(f"cap_section[{lid},{k},{i}]", row, LESS, 0.0)

            # availability: boarders cannot exceed waiting passengers
            if k == 1:
                avail = {d_idx: -1.0}
                rhs = 0.0
            else:
                avail = {d_idx: -1.0, lv.D[(k - 1, i)]: 1.0,
                         lv.h[(k - 1, i)]: -alpha}
                rhs = 0.0
            row = {lv.f[(k, i)]: 1.0, **avail}
            m.add_constraint(f"avail[{lid},{k},{i}]", row, LESS, rhs)
            if (k, i) in lv.g:
                row = {lv.g[(k, i)]: 1.0, **avail}
                m.add_constraint(f"avail_section[{lid},{k},{i}]", row, LESS, rhs)

            # surplus balance
            row = {lv.h[(k, i)]: 1.0, d_idx: -1.0, lv.f[(k, i)]: 1.0}
            if k > 1:
                row[lv.D[(k - 1, i)]] = 1.0
                row[lv.h[(k - 1, i)]] = -alpha
            if (k, i) in lv.g:
                row[lv.g[(k, i)]] = 1.0
            if st is not None and i == st.last:
                # section riders bound past the tail alight and wait again
                for r in range(st.first, st.last):
                    c = frac_past(r, st.last)
                    if c:
                        row[lv.g[(k, r)]] = row.get(lv.g[(k, r)], 0.0) - c
            m.add_constraint(f"surplus[{lid},{k},{i}]", row, EQUAL, 0.0)

            # non-served flow is charged wherever a train actually called
            Mi = lv.big_m[i - 1]
            if st is not None and st.first <= i < st.last:
                ind = ySsum(k, -Mi)
            else:
                ind = ysum(k, -Mi)
            row = {lv.x[(k, i)]: 1.0, lv.h[(k, i)]: -1.0, **ind}
            m.add_constraint(f"nonserved[{lid},{k},{i}]", row, GREATER, -Mi)
        prev_deltas = new_deltas


def build_line_model(line: LineSpec, frozen: Sequence[FrozenDemand],
                     params: GlobalParams, with_cuts: bool = True) -> MilpModel:
    """Single-line planning model against a frozen demand curve."""
    if len(frozen) != line.n_stations:
        raise ValueError("need one frozen demand per station")
    m = MilpModel(name=f"line:{line.id}")
    big_m = compute_big_m(line, frozen)
    lv = _declare_line_vars(m, line, params, big_m)
    _add_line_constraints(m, line, lv, frozen, params, with_cuts)
    m.metadata["lines"] = {line.id: lv}
    m.metadata["kind"] = "line"
    return m


# ---------------------------------------------------------------------------
# Joint model


def count_joint_binaries(scenario: NetworkScenario) -> int:
    """Binaries the joint model would create, before building anything."""
    frozen = freeze_network_demand(scenario, {})
    total = 0
    for ln in scenario.lines:
        per_trip = len(ln.capacities) * (2 if ln.short_turn else 1)
        total += ln.max_trips * per_trip
        for i in ln.stations:
            R = len(frozen[ln.id][i - 1].breakpoints)
            if R:
                total += ln.max_trips * (R + 1)
            for src_id, _si, _tau in scenario.transfer_feeds(ln.id, i):
                total += ln.max_trips * (scenario.line(src_id).max_trips + 1)
    return total


def _product_with_binary(m: MilpModel, name: str, expr: Mapping[int, float],
                         const: float, lo: float, hi: float, delta: int) -> int:
    """Variable equal to (expr + const) * delta for a binary delta.

    ``lo``/``hi`` bound the continuous factor; the four envelope rows are
    exact because the factor is multiplied by a 0/1 variable.
    """
    u = m.add_var(name, min(0.0, lo), max(0.0, hi))
    m.add_constraint(f"{name}:ub", {u: 1.0, delta: -hi}, LESS, 0.0)
    m.add_constraint(f"{name}:lb", {u: 1.0, delta: -lo}, GREATER, 0.0)
    row = {u: 1.0, delta: -lo}
    for idx, c in expr.items():
        row[idx] = row.get(idx, 0.0) - c
    m.add_constraint(f"{name}:tie_ub", row, LESS, const - lo)
    row = {u: 1.0, delta: -hi}
    for idx, c in expr.items():
        row[idx] = row.get(idx, 0.0) - c
    m.add_constraint(f"{name}:tie_lb", row, GREATER, const - hi)
    return u


def build_joint_model(scenario: NetworkScenario, with_cuts: bool = True,
                      binary_cap: int = DEFAULT_JOINT_BINARY_CAP,
                      enforce_cap: bool = True) -> MilpModel:
    """One model for the whole network with decision-dependent transfers.

    Transfer arrivals at an interchange are steps whose instants and sizes
    depend on the feeding line's times and flows; membership and mass
    selection are linearized with binary-product envelopes, which is only
    practical on tiny instances.  Set ``enforce_cap=False`` when every
    binary will be fixed afterwards (continuous re-solve).
    """
    nbin = count_joint_binaries(scenario)
    if enforce_cap and nbin > binary_cap:
        raise ValueError(
            f"joint model would need {nbin} binaries, above the cap of "
            f"{binary_cap}; use the block-iteration heuristic instead")
    frozen = freeze_network_demand(scenario, {})
    params = scenario.globals
    T = params.horizon
    m = MilpModel(name="joint")
    handles: Dict[str, LineVars] = {}

    # every station's bound must absorb worst-case transfer mass
    for ln in scenario.lines:
        extra = {}
        for i in ln.stations:
            add = 0.0
            for src_id, _si, tau in scenario.transfer_feeds(ln.id, i):
                src = scenario.line(src_id)
                add += src.max_trips * tau * max(src.capacities)
            if add:
                extra[i] = add
        big_m = compute_big_m(ln, frozen[ln.id], transfer_extra=extra)
        handles[ln.id] = _declare_line_vars(m, ln, params, big_m)

    # prefix transfer mass per feed: C[r] is what the first r trains of the
    # feeding line unload here, scaled by the transfer fraction
    prefix_memo: Dict[Tuple[str, int, str, int], Tuple[List[int], list, List[float]]] = {}

    def feed_prefix(dst_id, i, src_id, si, tau):
        key = (dst_id, i, src_id, si)
        if key in prefix_memo:
            return prefix_memo[key]
        src = scenario.line(src_id)
        sv = handles[src_id]
        off_s = station_offsets(src)
        e_i = src.e[si - 1]
        in_sec = src.in_short_turn(si)
        qmax = max(src.capacities)
        running: Dict[int, float] = {}
        C: List[int] = []
        arrivals = []   # (expr, const, lo, hi) per source trip
        cmax: List[float] = []
        head = dist_head_to_shortturn(src) if src.short_turn else 0.0
        for r in range(1, src.max_trips + 1):
            for j in range(1, si):
                pj = src.p[j - 1][si - 1]
                if not pj:
                    continue
                idx = sv.f[(r, j)]
                running[idx] = running.get(idx, 0.0) + tau * pj
                if in_sec and (r, j) in sv.g:
                    gi = sv.g[(r, j)]
                    running[gi] = running.get(gi, 0.0) + tau * pj
            cm = r * tau * qmax
            c_idx = m.add_var(f"C[{src_id},{si},{dst_id},{i},{r}]", 0.0, cm)
            row = {c_idx: 1.0}
            for idx, c in running.items():
                row[idx] = row.get(idx, 0.0) - c
            m.add_constraint(f"Cdef[{src_id},{si},{dst_id},{i},{r}]",
                             row, EQUAL, 0.0)
            C.append(c_idx)
            cmax.append(cm)
            expr = {sv.t1[r]: 1.0}
            const = off_s[si - 1] - e_i
            lo, hi = const, T + const
            if in_sec and src.short_turn is not None:
                expr[sv.w[r]] = 1.0
                lo -= head
                hi += T + head
            arrivals.append((expr, const, lo, hi))
        prefix_memo[key] = (C, arrivals, cmax)
        return prefix_memo[key]

    for ln in scenario.lines:
        lid = ln.id
        lv = handles[lid]
        feeds_at = {i: scenario.transfer_feeds(lid, i) for i in ln.stations}
        prev_internal: Dict[Tuple[int, int], List[int]] = {}

        def hook(k, i, t_coeffs, t_const, d_idx, prev_ext,
                 lid=lid, lv=lv, feeds_at=feeds_at, ln=ln,
                 prev_internal=prev_internal):
            t_hat = scenario.t_hat[lid]
            extra_eq = []
            for fi, (src_id, si, tau) in enumerate(feeds_at[i]):
                C, arrivals, cmax = feed_prefix(lid, i, src_id, si, tau)
                kb = len(C)
                tag = f"{src_id}.{si}>{lid},{k},{i}"
                deltas = [m.add_var(f"dI[{tag},{r}]", 0, 1, is_int=True)
                          for r in range(kb + 1)]
                m.add_constraint(f"dI_one[{tag}]",
                                 {d: 1.0 for d in deltas}, EQUAL, 1.0)
                for r in range(kb + 1):
                    # left edge: the r-th feeding train has arrived by t
                    if r >= 1:
                        expr, const, lo, hi = arrivals[r - 1]
                        u = _product_with_binary(m, f"uI[{tag},{r}]", expr,
                                                 const, lo, hi, deltas[r])
                        row = {u: 1.0}
                        for idx, c in t_coeffs.items():
                            row[idx] = row.get(idx, 0.0) - c
                        m.add_constraint(f"dI_lo[{tag},{r}]", row, LESS,
                                         t_const)
                    # right edge: the next feeding train has not yet arrived
                    if r < kb:
                        expr, const, lo, hi = arrivals[r]
                        v = _product_with_binary(m, f"vI[{tag},{r}]", expr,
                                                 const, lo, hi, deltas[r])
                        row = {v: -1.0, deltas[r]: t_hat}
                        for idx, c in t_coeffs.items():
                            row[idx] = row.get(idx, 0.0) + c
                        m.add_constraint(f"dI_hi[{tag},{r}]", row, LESS,
                                         t_hat - t_const)
                    # selected prefix mass enters the demand definition
                    if r >= 1:
                        z = m.add_var(f"zI[{tag},{r}]", 0.0, cmax[r - 1])
                        m.add_constraint(f"zI_ub[{tag},{r}]",
                                         {z: 1.0, deltas[r]: -cmax[r - 1]},
                                         LESS, 0.0)
                        m.add_constraint(f"zI_tie_ub[{tag},{r}]",
                                         {z: 1.0, C[r - 1]: -1.0}, LESS, 0.0)
                        m.add_constraint(f"zI_tie_lb[{tag},{r}]",
                                         {z: 1.0, C[r - 1]: -1.0,
                                          deltas[r]: -cmax[r - 1]},
                                         GREATER, -cmax[r - 1])
                        extra_eq.append((z, 1.0))
                if with_cuts and (k - 1, i) in prev_internal:
                    prev = prev_internal[(k - 1, i)][fi]
                    for r in range(kb):
                        row = {}
                        for rr in range(r + 1):
                            row[deltas[rr]] = row.get(deltas[rr], 0.0) + 1.0
                            row[prev[rr]] = row.get(prev[rr], 0.0) - 1.0
                        m.add_constraint(f"dI_mono[{tag},{r}]", row, LESS, 0.0)
                prev_internal.setdefault((k, i), []).append(deltas)
            return _attach_frozen_demand(m, lid, frozen[lid][i - 1], k, i,
                                         t_coeffs, t_const, d_idx, with_cuts,
                                         prev_ext, extra_eq=extra_eq)

        _add_line_constraints(m, ln, lv, frozen[lid], params, with_cuts,
                              demand_hook=hook)
    m.metadata["lines"] = handles
    m.metadata["kind"] = "joint"
    return m


# ---------------------------------------------------------------------------
# Fixing and extraction


def fix_binaries(model: MilpModel, assignment: Mapping[str, float]) -> MilpModel:
    """Copy of the model with the named integer variables pinned.

    Values are rounded to the nearest integer and must lie inside the
    variable's bounds; whole-trip binaries may not exceed their section
    binaries where both exist.
    """
    fixed = MilpModel(name=model.name)
    fixed.constraints = list(model.constraints)
    fixed.objective_offset = model.objective_offset
    fixed.metadata = dict(model.metadata)
    fixed._index = dict(model._index)
    fixed.variables = list(model.variables)
    for name, val in assignment.items():
        if not model.has_var(name):
            raise KeyError(f"unknown variable {name!r}")
        j = model.var(name)
        v = model.variables[j]
        if not v.is_int:
            raise ValueError(f"{name!r} is not an integer variable")
        r = float(round(val))
        if r < v.lb - 1e-9 or r > v.ub + 1e-9:
            raise ValueError(f"{name!r}={val} outside bounds [{v.lb}, {v.ub}]")
        fixed.variables[j] = type(v)(v.name, r, r, v.is_int, v.obj)
    for name, val in assignment.items():
        if name.startswith("y[") and round(val) == 1:
            twin = "yS[" + name[2:]
            if model.has_var(twin) and round(assignment.get(twin, 1)) != 1:
                raise ValueError(
                    f"{name} set but {twin} clear: a whole trip always "
                    f"covers its short-turn section")
    return fixed


def binary_assignment(values: Mapping[str, float],
                      model: MilpModel) -> Dict[str, float]:
    """Extract the integer-variable part of a solution value map."""
    out = {}
    for v in model.variables:
        if v.is_int and v.name in values:
            out[v.name] = float(round(values[v.name]))
    return out


def extract_line_plan(values: Mapping[str, float], line: LineSpec,
                      params: GlobalParams):
    """Turn solver values into a structured per-line plan."""
    from .solution import FAKE, SHORT, WHOLE, LinePlanSolution, TripPlan

    lid = line.id
    n = line.n_stations
    st = line.short_turn
    trips = []
    for k in range(1, line.max_trips + 1):
        cap = 0
        kind = FAKE
        for q in line.capacities:
            if values.get(f"y[{lid},{k},{q}]", 0.0) > 0.5:
                kind, cap = WHOLE, q
        if kind == FAKE and st is not None:
            for q in line.capacities:
                if values.get(f"yS[{lid},{k},{q}]", 0.0) > 0.5:
                    kind, cap = SHORT, q
        f = tuple(values.get(f"f[{lid},{k},{i}]", 0.0) for i in range(1, n + 1))
        g = tuple(values.get(f"g[{lid},{k},{i}]", 0.0) for i in range(1, n + 1))
        h = tuple(values.get(f"h[{lid},{k},{i}]", 0.0) for i in range(1, n + 1))
        x = tuple(values.get(f"x[{lid},{k},{i}]", 0.0) for i in range(1, n + 1))
        D = tuple(values.get(f"D[{lid},{k},{i}]", 0.0) for i in range(1, n + 1))
        trips.append(TripPlan(
            kind=kind, capacity=cap,
            t1=values.get(f"t1[{lid},{k}]", 0.0),
            w=values.get(f"w[{lid},{k}]", 0.0) if kind != WHOLE else 0.0,
            f=f, g=g, h=h, x=x, demand=D))
    plan = LinePlanSolution(line_id=lid, trips=tuple(trips), objective=0.0)
    breakdown = objective_breakdown(plan, line, params)
    return LinePlanSolution(line_id=lid, trips=tuple(trips),
                            objective=breakdown["total"])


def build_conditional_lp(scenario: NetworkScenario,
                         plans: Mapping[str, "LinePlanSolution"],
                         elastic: bool = False) -> MilpModel:
    """Network-consistent continuous model at a fixed trip structure.

    Trip kinds, capacities, demand-interval selections and transfer-count
    selections are pinned to the given plans; times and flows of all lines
    remain free and are coupled exactly (a transfer step enters a demand
    definition as the feeding line's unload expression).  The model has no
    integer variables, so one LP solve re-optimizes the whole network
    within the region the plans select.

    ``elastic=True`` makes every pinned time window soft, with a heavy
    penalty per minute of violation: plans assembled from per-line passes
    can order cross-line arrivals in a way no single timetable satisfies,
    and the elastic solve finds the nearest consistent times so the pins
    can be recomputed and the model rebuilt cleanly.
    """
    import bisect

    from .solution import SHORT, WHOLE

    params = scenario.globals
    T = params.horizon

    def add_pin(name: str, row: Dict[int, float], sense: str,
                rhs: float) -> None:
        if elastic:
            s = m.add_var(f"slack_{name}", 0.0, 4.0 * T, obj=1e5)
            row = dict(row)
            row[s] = 1.0 if sense == GREATER else -1.0
        m.add_constraint(name, row, sense, rhs)
    frozen_ext = freeze_network_demand(scenario, {})
    m = MilpModel(name="conditional")

    # per-line structure and variables
    info = {}
    for ln in scenario.lines:
        lid = ln.id
        plan = plans[lid]
        if len(plan.trips) != ln.max_trips:
            raise ValueError(f"{lid}: plan has {len(plan.trips)} trips, "
                             f"expected {ln.max_trips}")
        st = ln.short_turn
        head = dist_head_to_shortturn(ln) if st else 0.0
        extra = {}
        for i in ln.stations:
            add = sum(scenario.line(s).max_trips * tau * max(scenario.line(s).capacities)
                      for s, _si, tau in scenario.transfer_feeds(lid, i))
            if add:
                extra[i] = add
        big_m = compute_big_m(ln, frozen_ext[lid], transfer_extra=extra)
        coef_f, coef_g = _reward_coefficients(ln)
        kinds = [t.kind for t in plan.trips]
        caps = [t.capacity for t in plan.trips]
        first_short = kinds[0] == SHORT
        kp = kappa(ln) if st else None
        lv = LineVars(big_m=list(big_m))
        for k in range(1, ln.max_trips + 1):
            lo = T if k == ln.max_trips else 0.0
            hi = 0.0 if k == 1 else T
            if st is not None and k == kp and first_short:
                hi = 0.0   # the merge whole trip departs with the opening
            lv.t1[k] = m.add_var(f"t1[{lid},{k}]", lo, hi)
        if st is not None:
            for k in range(1, ln.max_trips + 1):
                if kinds[k - 1] == WHOLE:
                    lv.w[k] = m.add_var(f"w[{lid},{k}]", 0.0, 0.0)
                else:
                    lv.w[k] = m.add_var(f"w[{lid},{k}]", -head, T + head)
        for k in range(1, ln.max_trips + 1):
            kind = kinds[k - 1]
            q = float(caps[k - 1])
            weight = _trip_weight(params, k, ln.max_trips)
            if kind == WHOLE:
                qi = ln.capacities.index(caps[k - 1])
                m.objective_offset += ln.trip_cost[qi]
            elif kind == SHORT:
                qi = ln.capacities.index(caps[k - 1])
                m.objective_offset += st.trip_cost[qi]
            for i in range(1, ln.n_stations + 1):
                Mi = big_m[i - 1]
                f_ub = min(Mi, q) if kind == WHOLE else 0.0
                lv.f[(k, i)] = m.add_var(f"f[{lid},{k},{i}]", 0.0, f_ub,
                                         obj=-coef_f[i])
                if st is not None and st.first <= i < st.last:
                    g_ub = min(Mi, q) if kind == SHORT else 0.0
                    lv.g[(k, i)] = m.add_var(f"g[{lid},{k},{i}]", 0.0, g_ub,
                                             obj=-coef_g[i])
                lv.h[(k, i)] = m.add_var(f"h[{lid},{k},{i}]", 0.0, Mi)
                if st is not None and st.first <= i < st.last:
                    served = kind in (WHOLE, SHORT)
                else:
                    served = kind == WHOLE
                lv.x[(k, i)] = m.add_var(f"x[{lid},{k},{i}]", 0.0,
                                         Mi if served else 0.0, obj=weight)
                lv.D[(k, i)] = m.add_var(f"D[{lid},{k},{i}]", 0.0, Mi)
        info[lid] = (lv, kinds, caps, first_short, kp)

    def arrival_expr(src, sv, si, r):
        off_s = station_offsets(src)
        const = off_s[si - 1] - src.e[si - 1]
        expr = {sv.t1[r]: 1.0}
        if src.in_short_turn(si) and src.short_turn is not None:
            expr[sv.w[r]] = 1.0
        return expr, const

    def arrival_value(src, plan, si, r):
        off_s = station_offsets(src)
        t = plan.trips[r - 1]
        w = t.w if src.in_short_turn(si) else 0.0
        return t.t1 + off_s[si - 1] + w - src.e[si - 1]

    for ln in scenario.lines:
        lid = ln.id
        lv, kinds, caps, first_short, kp = info[lid]
        plan = plans[lid]
        st = ln.short_turn
        head = dist_head_to_shortturn(ln) if st else 0.0
        off = station_offsets(ln)
        kbar = ln.max_trips

        # --- timing rows with trip kinds folded in
        for k in range(2, kbar + 1):
            dt = {lv.t1[k]: 1.0, lv.t1[k - 1]: -1.0}
            whole = kinds[k - 1] == WHOLE
            if st is not None and k == kp:
                m.add_constraint(f"merge_trip_order[{lid}]", dt, GREATER, 0.0)
                if not whole:
                    m.add_constraint(f"head_copy[{lid},{k}]", dt, LESS, 0.0)
            elif whole:
                m.add_constraint(f"headway_min[{lid},{k}]", dt, GREATER,
                                 ln.safety_interval)
            else:
                m.add_constraint(f"head_copy[{lid},{k}]", dt, EQUAL, 0.0)
            if st is not None:
                dts = {lv.t1[k]: 1.0, lv.t1[k - 1]: -1.0,
                       lv.w[k]: 1.0, lv.w[k - 1]: -1.0}
                if kinds[k - 1] in (WHOLE, SHORT):
                    m.add_constraint(f"section_headway_min[{lid},{k}]", dts,
                                     GREATER, ln.safety_interval)
                    m.add_constraint(f"section_headway_max[{lid},{k}]", dts,
                                     LESS, T + head)
                else:
                    m.add_constraint(f"section_copy[{lid},{k}]", dts, EQUAL, 0.0)

        # --- flow rows
        h_prevD = None
        for k in range(1, kbar + 1):
            kind = kinds[k - 1]
            q = float(caps[k - 1])
            for i in range(1, ln.n_stations + 1):
                in_sec = st is not None and st.first <= i <= st.last
                t_coeffs = {lv.t1[k]: 1.0}
                if in_sec:
                    t_coeffs[lv.w[k]] = 1.0
                t_const = off[i - 1]
                trip = plan.trips[k - 1]
                t_val = trip.t1 + off[i - 1] + (trip.w if in_sec else 0.0)
                d_idx = lv.D[(k, i)]

                fr = frozen_ext[lid][i - 1]
                eq = {d_idx: 1.0}
                for idx, c in t_coeffs.items():
                    eq[idx] = eq.get(idx, 0.0) - fr.rate * c
                rhs = fr.beta0 + fr.rate * t_const
                if fr.breakpoints:
                    sel = bisect.bisect_right(fr.breakpoints, t_val + 1e-9)
                    lower = (0.0,) + fr.breakpoints
                    upper = fr.breakpoints + (fr.t_hat,)
                    cum = (0.0,) + fr.cumulative
                    rhs += cum[sel]
                    if lower[sel]:
                        add_pin(f"dE_lo[{lid},{k},{i}]",
                                dict(t_coeffs), GREATER,
                                lower[sel] - t_const)
                    add_pin(f"dE_hi[{lid},{k},{i}]",
                            dict(t_coeffs), LESS,
                            upper[sel] - t_const)
                for src_id, si, tau in scenario.transfer_feeds(lid, i):
                    src = scenario.line(src_id)
                    sv, src_kinds = info[src_id][0], info[src_id][1]
                    # only trips that actually unload at si pin an ordering;
                    # fake trips (and short trips outside their section)
                    # deliver nothing and their clock variables are copies,
                    # not the plan's reported times
                    unloading = sorted(
                        (r for r in range(1, src.max_trips + 1)
                         if src_kinds[r - 1] == WHOLE
                         or (src_kinds[r - 1] == SHORT
                             and src.in_short_turn(si))),
                        key=lambda r: (arrival_value(src, plans[src_id],
                                                     si, r), r))
                    served = [r for r in unloading
                              if arrival_value(src, plans[src_id], si, r)
                              <= t_val + 1e-9]
                    count = len(served)
                    tag = f"{src_id}.{si}>{lid},{k},{i}"
                    if count >= 1:
                        expr, const = arrival_expr(src, sv, si, served[-1])
                        row = dict(t_coeffs)
                        for idx, c in expr.items():
                            row[idx] = row.get(idx, 0.0) - c
                        add_pin(f"dI_lo[{tag}]", row, GREATER,
                                const - t_const)
                        for r in served:
                            for j in range(1, si):
                                pj = src.p[j - 1][si - 1]
                                if not pj:
                                    continue
                                fi = sv.f[(r, j)]
                                eq[fi] = eq.get(fi, 0.0) - tau * pj
                                if (src.in_short_turn(si)
                                        and (r, j) in sv.g):
                                    gi = sv.g[(r, j)]
                                    eq[gi] = eq.get(gi, 0.0) - tau * pj
                    if count < len(unloading):
                        expr, const = arrival_expr(src, sv, si,
                                                   unloading[count])
                        row = dict(t_coeffs)
                        for idx, c in expr.items():
                            row[idx] = row.get(idx, 0.0) - c
                        add_pin(f"dI_hi[{tag}]", row, LESS,
                                const - t_const)
                m.add_constraint(f"Ddef[{lid},{k},{i}]", eq, EQUAL, rhs)

                # capacity and availability with kinds folded
                if kind == WHOLE:
                    row = {lv.f[(k, i)]: 1.0}
                    for r in range(1, i):
                        c = still_aboard(ln, r, i)
                        if c:
                            row[lv.f[(k, r)]] = c
                    m.add_constraint(f"cap[{lid},{k},{i}]", row, LESS, q)
                if kind == SHORT and st is not None and st.first <= i < st.last:
                    row = {lv.g[(k, i)]: 1.0}
                    for r in range(st.first, i):
                        c = still_aboard(ln, r, i)
                        if c:
                            row[lv.g[(k, r)]] = c
                    m.add_constraint(f"cap_section[{lid},{k},{i}]", row,
                                     LESS, q)
                if k == 1:
                    avail = {d_idx: -1.0}
                else:
                    avail = {d_idx: -1.0, lv.D[(k - 1, i)]: 1.0,
                             lv.h[(k - 1, i)]: -params.alpha}
                if kind == WHOLE:
                    row = {lv.f[(k, i)]: 1.0, **avail}
                    m.add_constraint(f"avail[{lid},{k},{i}]", row, LESS, 0.0)
                if (k, i) in lv.g and kind == SHORT:
                    row = {lv.g[(k, i)]: 1.0, **avail}
                    m.add_constraint(f"avail_section[{lid},{k},{i}]", row,
                                     LESS, 0.0)
                row = {lv.h[(k, i)]: 1.0, d_idx: -1.0, lv.f[(k, i)]: 1.0}
                if k > 1:
                    row[lv.D[(k - 1, i)]] = 1.0
                    row[lv.h[(k - 1, i)]] = -params.alpha
                if (k, i) in lv.g:
                    row[lv.g[(k, i)]] = 1.0
                if st is not None and i == st.last:
                    for r in range(st.first, st.last):
                        c = still_aboard(ln, r, st.last)
                        if c:
                            row[lv.g[(k, r)]] = row.get(lv.g[(k, r)], 0.0) - c
                m.add_constraint(f"surplus[{lid},{k},{i}]", row, EQUAL, 0.0)
                if st is not None and st.first <= i < st.last:
                    served = kind in (WHOLE, SHORT)
                else:
                    served = kind == WHOLE
                if served:
                    m.add_constraint(f"nonserved[{lid},{k},{i}]",
                                     {lv.x[(k, i)]: 1.0, lv.h[(k, i)]: -1.0},
                                     GREATER, 0.0)
    m.metadata["lines"] = {lid: info[lid][0] for lid in info}
    m.metadata["kind"] = "conditional"
    return m


def objective_breakdown(plan, line: LineSpec, params: GlobalParams) -> Dict[str, float]:
    """Capacity cost, passenger reward and non-served penalty of one plan."""
    from .solution import SHORT, WHOLE

    coef_f, coef_g = _reward_coefficients(line)
    st = line.short_turn
    cap_cost = 0.0
    reward = 0.0
    nonserved = 0.0
    kbar = line.max_trips
    for k, trip in enumerate(plan.trips, start=1):
        if trip.kind == WHOLE:
            qi = line.capacities.index(trip.capacity)
            cap_cost += line.trip_cost[qi]
        elif trip.kind == SHORT:
            qi = line.capacities.index(trip.capacity)
            cap_cost += st.trip_cost[qi]
        for i in range(1, line.n_stations + 1):
            reward += coef_f[i] * trip.f[i - 1]
            if i in coef_g:
                reward += coef_g[i] * trip.g[i - 1]
        nonserved += _trip_weight(params, k, kbar) * sum(trip.x)
    total = cap_cost - reward + nonserved
    return {"capacity_cost": cap_cost, "reward": reward,
            "non_served": nonserved, "total": total}
