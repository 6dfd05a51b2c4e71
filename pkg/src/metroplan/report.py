"""Human-readable reports of a solved plan.

Times are displayed as wall-clock HH:MM:SS counted from a configurable
service start (07:30:00 by default); all internal arithmetic stays in
decimal minutes.
"""

from __future__ import annotations

import io
import json
from typing import Dict, List, Mapping

from .domain import LineSpec, NetworkScenario, station_offsets
from .formulation import objective_breakdown
from .solution import FAKE, SHORT, WHOLE, NetworkSolution

SERVICE_START_SECONDS = 7 * 3600 + 30 * 60   # 07:30:00


def clock(minutes: float, base_seconds: int = SERVICE_START_SECONDS) -> str:
    total = base_seconds + int(round(minutes * 60.0))
    hh, rem = divmod(total, 3600)
    mm, ss = divmod(rem, 60)
    return f"{hh:02d}:{mm:02d}:{ss:02d}"


def _trip_label(trip) -> str:
    if trip.kind == FAKE:
        return "-"
    suffix = "S" if trip.kind == SHORT else ""
    return f"{trip.capacity}{suffix}"


def trip_rows(line: LineSpec, plan) -> List[dict]:
    """Per-trip, per-station figures: times, boards, loads, alightings."""
    n = line.n_stations
    st = line.short_turn
    off = station_offsets(line)
    rows = []
    for k, trip in enumerate(plan.trips, start=1):
        stations = []
        boards = [trip.f[i] + trip.g[i] for i in range(n)]
        load = 0.0
        for i in range(1, n + 1):
            in_sec = st is not None and st.first <= i <= st.last
            t = trip.t1 + off[i - 1] + (trip.w if in_sec else 0.0)
            getoff = sum(boards[r - 1] * line.p[r - 1][i - 1]
                         for r in range(1, i))
            if trip.kind == SHORT and st is not None and i == st.last:
                getoff = load    # everyone leaves at the section tail
            elif i == n:
                getoff = load    # everyone leaves at the end of the line
            load = load - getoff + boards[i - 1]
            served = (trip.kind == WHOLE or
                      (trip.kind == SHORT and in_sec))
            stations.append({
                "station": i,
                "time": clock(t),
                "time_minutes": t,
                "board": boards[i - 1],
                "getoff": getoff,
                "load": load,
                "surplus": trip.h[i - 1],
                "non_served": trip.x[i - 1],
                "served": served,
            })
        rows.append({"trip": k, "label": _trip_label(trip),
                     "kind": trip.kind, "capacity": trip.capacity,
                     "stations": stations})
    return rows


def network_summary(scenario: NetworkScenario,
                    solution: NetworkSolution) -> Dict[str, dict]:
    out = {}
    total = {"capacity_cost": 0.0, "reward": 0.0, "non_served": 0.0,
             "total": 0.0}
    for line in scenario.lines:
        b = objective_breakdown(solution.lines[line.id], line,
                                scenario.globals)
        out[line.id] = b
        for key in total:
            total[key] += b[key]
    out["network"] = total
    return out


def build_report(scenario: NetworkScenario,
                 solution: NetworkSolution) -> dict:
    return {
        "objective": solution.objective,
        "summary": network_summary(scenario, solution),
        "lines": {
            line.id: trip_rows(line, solution.lines[line.id])
            for line in scenario.lines
        },
    }


def render_table(scenario: NetworkScenario, solution: NetworkSolution) -> str:
    rep = build_report(scenario, solution)
    buf = io.StringIO()
    w = buf.write
    w(f"network objective: {solution.objective:.2f}\n")
    for line in scenario.lines:
        lid = line.id
        s = rep["summary"][lid]
        w(f"\nline {lid}:  capacity cost {s['capacity_cost']:.2f}  "
          f"reward {s['reward']:.2f}  non-served {s['non_served']:.2f}  "
          f"total {s['total']:.2f}\n")
        header = (f"{'trip':>4} {'cap':>6} {'st':>3} {'depart':>9} "
                  f"{'board':>9} {'getoff':>9} {'load':>9} "
                  f"{'surplus':>9} {'nonserv':>9}\n")
        w(header)
        for row in rep["lines"][lid]:
            for sta in row["stations"]:
                w(f"{row['trip']:>4} {row['label']:>6} "
                  f"{sta['station']:>3} {sta['time']:>9} "
                  f"{sta['board']:>9.2f} {sta['getoff']:>9.2f} "
                  f"{sta['load']:>9.2f} {sta['surplus']:>9.2f} "
                  f"{sta['non_served']:>9.2f}\n")
    net = rep["summary"]["network"]
    w(f"\nall lines:  capacity cost {net['capacity_cost']:.2f}  "
      f"reward {net['reward']:.2f}  non-served {net['non_served']:.2f}  "
      f"total {net['total']:.2f}\n")
    return buf.getvalue()


def render_csv(scenario: NetworkScenario, solution: NetworkSolution) -> str:
    rep = build_report(scenario, solution)
    buf = io.StringIO()
    buf.write("line,trip,label,kind,capacity,station,time,time_minutes,"
              "board,getoff,load,surplus,non_served,served\n")
    for line in scenario.lines:
        for row in rep["lines"][line.id]:
            for sta in row["stations"]:
                buf.write(
                    f"{line.id},{row['trip']},{row['label']},{row['kind']},"
                    f"{row['capacity']},{sta['station']},{sta['time']},"
                    f"{sta['time_minutes']!r},{sta['board']!r},"
                    f"{sta['getoff']!r},{sta['load']!r},{sta['surplus']!r},"
                    f"{sta['non_served']!r},{int(sta['served'])}\n")
    return buf.getvalue()


def render_json(scenario: NetworkScenario, solution: NetworkSolution) -> str:
    return json.dumps(build_report(scenario, solution), indent=2,
                      sort_keys=True)
