"""Network scenario types, validation and departure-time kinematics.

Stations are 1-based and ordered in travel direction.  A round-trip metro
line is represented as two independent directed lines.  All times are
decimal minutes; the report layer converts to HH:MM:SS for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Tuple

from .demand import DemandSpec


class ScenarioError(ValueError):
    """Raised when a scenario document violates a structural invariant.

    ``violations`` is a list of (path, message) pairs, where path points at
    the offending field, e.g. ``lines[0].short_turn.first``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{p}: {m}" for p, m in self.violations)
        super().__init__(f"invalid scenario: {lines}")


@dataclass(frozen=True)
class ShortTurnSpec:
    """Consecutive station section that trains may serve as a short cycle."""

    first: int
    last: int
    trip_cost: Tuple[float, ...]  # aligned with LineSpec.capacities


@dataclass(frozen=True)
class LineSpec:
    id: str
    n_stations: int
    d: Tuple[float, ...]           # travel time station i -> i+1, len n-1
    e: Tuple[float, ...]           # stop time at station i, len n
    safety_interval: float
    max_trips: int
    capacities: Tuple[int, ...]    # sorted ascending
    trip_cost: Tuple[float, ...]   # whole-trip fixed cost per capacity
    p: Tuple[Tuple[float, ...], ...]      # OD proportions, nonzero only j > i
    gamma: Tuple[Tuple[float, ...], ...]  # per-passenger reward i -> j
    short_turn: Optional[ShortTurnSpec] = None

    @property
    def stations(self) -> range:
        return range(1, self.n_stations + 1)

    def in_short_turn(self, i: int) -> bool:
        st = self.short_turn
        return st is not None and st.first <= i <= st.last


@dataclass(frozen=True)
class InterchangeSpec:
    """One physical station shared by several directed lines.

    ``members`` identifies the station on each line; ``tau[src][dst]`` is the
    fraction of passengers alighting from ``src`` that transfer to ``dst``.
    """

    members: Tuple[Tuple[str, int], ...]
    tau: Mapping[str, Mapping[str, float]]


@dataclass(frozen=True)
class GlobalParams:
    horizon: float
    alpha: float
    mu1: float
    mu2: float
    last_trip_mu_multiplier: float = 10.0


@dataclass(frozen=True)
class NetworkScenario:
    lines: Tuple[LineSpec, ...]
    interchanges: Tuple[InterchangeSpec, ...]
    globals: GlobalParams
    demand: Mapping[str, Tuple[DemandSpec, ...]]  # line id -> per-station spec
    t_hat: Mapping[str, float] = field(default_factory=dict)

    def line(self, line_id: str) -> LineSpec:
        for ln in self.lines:
            if ln.id == line_id:
                return ln
        raise KeyError(line_id)

    def transfer_feeds(self, line_id: str, station: int):
        """Sources feeding internal jumps into (line_id, station).

        Returns a list of (src_line_id, src_station, tau) triples, one per
        interchange member whose alighting passengers transfer here.
        """
        feeds = []
        for ic in self.interchanges:
            here = [s for l, s in ic.members if l == line_id]
            if station not in here:
                continue
            for src, src_station in ic.members:
                if src == line_id:
                    continue
                frac = ic.tau.get(src, {}).get(line_id, 0.0)
                if frac > 0.0:
                    feeds.append((src, src_station, frac))
        return feeds


# ---------------------------------------------------------------------------
# Kinematics


def station_offsets(line: LineSpec) -> Tuple[float, ...]:
    """Cumulative travel-plus-stop offset of each station from the head.

    offsets[i-1] = sum_{r=1}^{i-1} (d_r + e_{r+1}); offsets[0] == 0.
    """
    off = [0.0]
    for r in range(line.n_stations - 1):
        off.append(off[-1] + line.d[r] + line.e[r + 1])
    return tuple(off)


def extended_horizon(line: LineSpec, horizon: float) -> float:
    """Latest instant any event of this line can occur."""
    return horizon + station_offsets(line)[-1]


def departure_time(t1: float, i: int, line: LineSpec, w: float = 0.0) -> float:
    """Departure time from station i of a trip leaving the head at t1.

    ``w`` shifts stations inside the short-turn section and must be 0
    elsewhere.
    """
    if not 1 <= i <= line.n_stations:
        raise ValueError(f"station {i} out of range 1..{line.n_stations}")
    if w != 0.0 and not line.in_short_turn(i):
        raise ValueError("w must be 0 outside the short-turn section")
    return t1 + station_offsets(line)[i - 1] + w


def dist_head_to_shortturn(line: LineSpec) -> float:
    """Travel-plus-stop time from the head to the first short-turn station."""
    if line.short_turn is None:
        raise ValueError(f"line {line.id} has no short-turn")
    return station_offsets(line)[line.short_turn.first - 1]


def kappa(line: LineSpec) -> int:
    """Index of the trip forced to be a true whole trip when the first trip
    is a short-turn: the count of short-turn trips fitting before a whole
    trip can reach the section head."""
    if line.short_turn is None:
        raise ValueError(f"line {line.id} has no short-turn")
    return int(math.floor(dist_head_to_shortturn(line) / line.safety_interval)) + 1


def max_trips_bound(horizon: float, safety_interval: float) -> int:
    """Upper bound on the number of trips that fit in the planning horizon."""
    if safety_interval <= 0:
        raise ValueError("safety interval must be positive")
    return int(math.ceil(horizon / safety_interval)) + 1


# ---------------------------------------------------------------------------
# Scenario validation


def _check_line(idx, raw, horizon, errs):
    path = f"lines[{idx}]"
    lid = raw.get("id")
    if not isinstance(lid, str) or not lid:
        errs.append((f"{path}.id", "missing or empty line id"))
        return None
    d = raw.get("d")
    e = raw.get("e")
    if not isinstance(d, Sequence) or len(d) < 1:
        errs.append((f"{path}.d", "need at least one travel segment"))
        return None
    n = len(d) + 1
    if not isinstance(e, Sequence) or len(e) != n:
        errs.append((f"{path}.e", f"expected {n} stop times"))
        return None
    for r, dr in enumerate(d):
        if not dr > 0:
            errs.append((f"{path}.d[{r}]", "travel time must be positive"))
    for i, ei in enumerate(e):
        if ei < 0:
            errs.append((f"{path}.e[{i}]", "stop time must be non-negative"))
    is_ = raw.get("IS")
    if is_ is None or not is_ > 0:
        errs.append((f"{path}.IS", "safety interval must be positive"))
        is_ = 1.0
    kbar = raw.get("max_trips")
    if not isinstance(kbar, int) or kbar < 2:
        errs.append((f"{path}.max_trips", "need an integer >= 2"))
        kbar = 2
    elif kbar > max_trips_bound(horizon, is_):
        errs.append((f"{path}.max_trips",
                     f"exceeds bound {max_trips_bound(horizon, is_)}"))
    caps = raw.get("capacities")
    if (not isinstance(caps, Sequence) or not caps
            or any(not isinstance(q, int) or q <= 0 for q in caps)
            or list(caps) != sorted(set(caps))):
        errs.append((f"{path}.capacities",
                     "need a sorted list of distinct positive integers"))
        caps = [1]
    cost = raw.get("trip_cost")
    if not isinstance(cost, Sequence) or len(cost) != len(caps) or any(c < 0 for c in cost):
        errs.append((f"{path}.trip_cost",
                     "need one non-negative cost per capacity"))
        cost = [0.0] * len(caps)

    st = None
    st_raw = raw.get("short_turn")
    if st_raw is not None:
        first, last = st_raw.get("first"), st_raw.get("last")
        st_cost = st_raw.get("cost")
        ok = isinstance(first, int) and isinstance(last, int) and 1 < first < last <= n
        if not ok:
            errs.append((f"{path}.short_turn",
                         f"need 1 < first < last <= {n} (head outside the section)"))
        if not isinstance(st_cost, Sequence) or len(st_cost) != len(caps) or any(c < 0 for c in st_cost):
            errs.append((f"{path}.short_turn.cost",
                         "need one non-negative cost per capacity"))
            st_cost = [0.0] * len(caps)
        if ok:
            st = ShortTurnSpec(first=first, last=last, trip_cost=tuple(float(c) for c in st_cost))

    def _matrix(key, allow_lower_zero_only):
        m = raw.get(key)
        if (not isinstance(m, Sequence) or len(m) != n
                or any(not isinstance(row, Sequence) or len(row) != n for row in m)):
            errs.append((f"{path}.{key}", f"expected a {n}x{n} matrix"))
            return tuple(tuple(0.0 for _ in range(n)) for _ in range(n))
        for i in range(n):
            for j in range(n):
                v = m[i][j]
                if v < 0 or (key == "p" and v > 1):
                    errs.append((f"{path}.{key}[{i}][{j}]", "value out of range"))
                if allow_lower_zero_only and j <= i and v != 0:
                    errs.append((f"{path}.{key}[{i}][{j}]",
                                 "proportions allowed only for j > i"))
        if key == "p":
            for i in range(n):
                if sum(m[i][i + 1:]) > 1 + 1e-9:
                    errs.append((f"{path}.p[{i}]", "row sum exceeds 1"))
        return tuple(tuple(float(v) for v in row) for row in m)

    p = _matrix("p", allow_lower_zero_only=True)
    gamma = _matrix("gamma", allow_lower_zero_only=False)

    line = LineSpec(
        id=lid, n_stations=n, d=tuple(float(x) for x in d),
        e=tuple(float(x) for x in e), safety_interval=float(is_),
        max_trips=kbar, capacities=tuple(caps),
        trip_cost=tuple(float(c) for c in cost),
        p=p, gamma=gamma, short_turn=st,
    )
    if st is not None and kappa(line) >= kbar:
        # the merge whole trip departs at 0 but trip kbar is pinned to the
        # horizon end, so a merge index at (or past) kbar cannot be served
        errs.append((f"{path}.short_turn",
                     f"merge trip index {kappa(line)} must be below "
                     f"max_trips={kbar}"))
    return line


def validate_scenario(raw: Mapping) -> NetworkScenario:
    """Check a parsed scenario document and return the normalized scenario.

    Raises ScenarioError with the full violation list on any failure.
    """
    errs = []
    horizon = raw.get("horizon_minutes")
    if horizon is None or not horizon > 0:
        errs.append(("horizon_minutes", "must be positive"))
        horizon = 1.0
    alpha = raw.get("alpha", 1.0)
    if not 0 <= alpha <= 1:
        errs.append(("alpha", "must lie in [0, 1]"))
        alpha = 1.0
    mu1 = raw.get("mu1", 0.0)
    mu2 = raw.get("mu2", 0.0)
    if mu1 < 0:
        errs.append(("mu1", "must be non-negative"))
    if mu2 < 0:
        errs.append(("mu2", "must be non-negative"))
    mult = raw.get("last_trip_mu_multiplier", 10.0)
    if mult < 1:
        errs.append(("last_trip_mu_multiplier", "must be >= 1"))

    lines = []
    for idx, lraw in enumerate(raw.get("lines", [])):
        ln = _check_line(idx, lraw, horizon, errs)
        if ln is not None:
            lines.append(ln)
    ids = [ln.id for ln in lines]
    if len(set(ids)) != len(ids):
        errs.append(("lines", "duplicate line ids"))
    by_id = {ln.id: ln for ln in lines}

    interchanges = []
    for idx, ic in enumerate(raw.get("interchanges", [])):
        path = f"interchanges[{idx}]"
        members = []
        for pair in ic.get("station_pairs", []):
            lid, st = pair[0], pair[1]
            if lid not in by_id:
                errs.append((f"{path}.station_pairs", f"unknown line {lid!r}"))
                continue
            if not 1 <= st <= by_id[lid].n_stations:
                errs.append((f"{path}.station_pairs", f"station {st} not on line {lid}"))
                continue
            members.append((lid, int(st)))
        tau = ic.get("tau", {})
        member_lines = {l for l, _ in members}
        for src, targets in tau.items():
            if src not in member_lines:
                errs.append((f"{path}.tau", f"{src!r} is not a member of this interchange"))
                continue
            total = 0.0
            for dst, frac in targets.items():
                if dst not in member_lines:
                    errs.append((f"{path}.tau.{src}", f"{dst!r} is not a member"))
                if not 0 <= frac <= 1:
                    errs.append((f"{path}.tau.{src}.{dst}", "fraction out of [0, 1]"))
                total += frac
            if total > 1 + 1e-9:
                errs.append((f"{path}.tau.{src}", "outgoing fractions exceed 1"))
        interchanges.append(InterchangeSpec(
            members=tuple(members),
            tau={s: dict(t) for s, t in tau.items()},
        ))

    t_hat = {ln.id: extended_horizon(ln, horizon) for ln in lines}

    demand_raw = raw.get("demand", {})
    demand = {}
    for ln in lines:
        dr = demand_raw.get(ln.id)
        path = f"demand.{ln.id}"
        if dr is None:
            errs.append((path, "demand section missing for line"))
            continue
        beta0 = dr.get("beta0", [])
        beta = dr.get("beta", [])
        jumps = dr.get("external_jumps", [[] for _ in range(ln.n_stations)])
        if len(beta0) != ln.n_stations or len(beta) != ln.n_stations:
            errs.append((path, f"beta0/beta must have {ln.n_stations} entries"))
            continue
        if len(jumps) != ln.n_stations:
            errs.append((f"{path}.external_jumps",
                         f"expected {ln.n_stations} per-station jump lists"))
            continue
        specs = []
        for i in range(ln.n_stations):
            if beta0[i] < 0:
                errs.append((f"{path}.beta0[{i}]", "must be non-negative"))
            if beta[i] < 0:
                errs.append((f"{path}.beta[{i}]", "must be non-negative"))
            times = [t for t, _ in jumps[i]]
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                errs.append((f"{path}.external_jumps[{i}]",
                             "jump times must be strictly increasing"))
            for t, size in jumps[i]:
                if not 0 < t < t_hat[ln.id]:
                    errs.append((f"{path}.external_jumps[{i}]",
                                 f"jump time {t} outside (0, {t_hat[ln.id]})"))
                if size < 0:
                    errs.append((f"{path}.external_jumps[{i}]",
                                 "jump size must be non-negative"))
            specs.append(DemandSpec(
                beta0=float(beta0[i]), rate=float(beta[i]),
                external_jumps=tuple((float(t), float(s)) for t, s in jumps[i]),
            ))
        demand[ln.id] = tuple(specs)

    if errs:
        raise ScenarioError(errs)

    return NetworkScenario(
        lines=tuple(lines),
        interchanges=tuple(interchanges),
        globals=GlobalParams(horizon=float(horizon), alpha=float(alpha),
                             mu1=float(mu1), mu2=float(mu2),
                             last_trip_mu_multiplier=float(mult)),
        demand=demand,
        t_hat=t_hat,
    )


def chain_horizons(prev_solution, scenario: NetworkScenario) -> NetworkScenario:
    """Carry the terminal passenger surplus of one horizon into the next.

    ``prev_solution`` must be a verified NetworkSolution for a scenario with
    the same topology: the last trip's surplus at each station is added to
    that station's initial passenger count.
    """
    if prev_solution is None or not getattr(prev_solution, "lines", None):
        raise ValueError("previous solution is empty")
    if not getattr(prev_solution, "verified", False):
        raise ValueError("previous solution has not been verified")
    new_demand = {}
    for ln in scenario.lines:
        plan = prev_solution.lines[ln.id]
        last = plan.trips[-1]
        specs = []
        for i, spec in enumerate(scenario.demand[ln.id]):
            specs.append(replace(spec, beta0=spec.beta0 + last.h[i]))
        new_demand[ln.id] = tuple(specs)
    return replace(scenario, demand=new_demand)
