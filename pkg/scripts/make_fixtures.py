#!/usr/bin/env python3
"""Regenerate the bundled example scenarios.

Writes JSON files into src/metroplan/data/scenarios/.  Every scenario is
validated before it is written.  The topology family covers the common
shapes of real subway networks: a single bidirectional line, crossing
pairs, and three- and four-line meshes with two to four interchange
stations; each topology ships with and without short-turn sections.
"""

from __future__ import annotations

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from metroplan.domain import validate_scenario  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "src/metroplan/data/scenarios"


# ---------------------------------------------------------------------------
# Calibrated four-line case


def case_study(short_turns: bool) -> dict:
    p = [
        [0, 0.40, 0.35, 0.20, 0],
        [0, 0, 0.60, 0.35, 0],
        [0, 0, 0, 0.95, 0],
        [0, 0, 0, 0, 1.0],
        [0, 0, 0, 0, 0],
    ]
    gamma_12 = [
        [0, 0.3, 0.4, 0.6, 1.0],
        [0.3, 0, 0.1, 0.3, 1.0],
        [0.5, 0.2, 0, 0.2, 1.0],
        [0.6, 0.3, 0.1, 0, 0],
        [0.9, 0.6, 0.4, 0.3, 0],
    ]
    gamma_34 = [
        [0, 0.2, 0.5, 0.7, 1.0],
        [0.2, 0, 0.3, 0.5, 1.0],
        [0.4, 0.2, 0, 0.2, 0],
        [0.7, 0.5, 0.3, 0, 0],
        [0.9, 0.7, 0.5, 0.2, 0],
    ]
    beta = {
        "L1": [10, 100, 120, 90, 0],
        "L2": [10, 160, 180, 150, 0],
        "L3": [10, 150, 170, 160, 0],
        "L4": [10, 100, 180, 150, 0],
    }
    beta0 = {
        "L1": [50, 50, 50, 50, 0],
        "L2": [50, 50, 50, 50, 0],
        "L3": [50, 50, 50, 50, 50],
        "L4": [50, 50, 50, 50, 50],
    }
    lines = []
    for lid in ("L1", "L2", "L3", "L4"):
        line = {
            "id": lid,
            "d": [3.0, 1.0, 2.0, 3.0],
            "e": [0.0, 0.5, 0.5, 0.5, 0.0],
            "IS": 2.0,
            "max_trips": 7,
            "capacities": [800, 1600],
            "trip_cost": [102.27, 204.54],
            "p": p,
            "gamma": gamma_12 if lid in ("L1", "L2") else gamma_34,
        }
        if short_turns:
            line["short_turn"] = {"first": 2, "last": 4,
                                  "cost": [34.09, 68.18]}
        lines.append(line)
    pairs = {"L1": ("L3", "L4"), "L2": ("L3", "L4"),
             "L3": ("L1", "L2"), "L4": ("L1", "L2")}
    return {
        "horizon_minutes": 20.0,
        "alpha": 1.0,
        "mu1": 0.1875,
        "mu2": 0.1875,
        "last_trip_mu_multiplier": 10.0,
        "lines": lines,
        "interchanges": [{
            "station_pairs": [[lid, 3] for lid in ("L1", "L2", "L3", "L4")],
            "tau": {src: {dst: 0.2 for dst in dsts}
                    for src, dsts in pairs.items()},
        }],
        "demand": {lid: {"beta0": beta0[lid], "beta": beta[lid],
                         "external_jumps": [[] for _ in range(5)]}
                   for lid in ("L1", "L2", "L3", "L4")},
    }


# ---------------------------------------------------------------------------
# Topology family


def _p_matrix(n: int) -> list:
    rows = []
    for i in range(n):
        row = [0.0] * n
        weights = [1.0 / (j - i) for j in range(i + 1, n)]
        total = sum(weights)
        for j, wgt in zip(range(i + 1, n), weights):
            row[j] = round(0.9 * wgt / total, 4)
        rows.append(row)
    return rows


def _gamma_matrix(n: int) -> list:
    return [[0.0 if i == j else round(0.1 + 0.15 * abs(j - i), 4)
             for j in range(n)] for i in range(n)]


def _topology_line(lid: str, idx: int, n: int = 7,
                   short: bool = False) -> dict:
    pattern = [2.0, 2.5, 3.0]
    d = [pattern[k % 3] for k in range(n - 1)]
    e = [0.0] + [0.5] * (n - 2) + [0.0]
    scale = 1.0 + 0.1 * (idx % 3)
    base = [6, 9, 8, 7, 5, 4, 6, 5, 7, 8, 6, 5, 4, 3][:n]
    beta = [round(b * scale, 3) for b in base]
    beta[-1] = 0.0
    beta0 = [30, 25, 20, 25, 20, 15, 22, 18, 24, 20, 16, 14, 12, 10][:n]
    beta0[-1] = 0
    jumps = [[] for _ in range(n)]
    jumps[1] = [[4.0, 40.0]]
    jumps[3] = [[6.0, 30.0]]
    line = {
        "id": lid,
        "d": d,
        "e": e,
        "IS": 2.0,
        "max_trips": 4,
        "capacities": [400, 800],
        "trip_cost": [60.0, 100.0],
        "p": _p_matrix(n),
        "gamma": _gamma_matrix(n),
    }
    if short:
        last = min(6, n - 1)
        line["short_turn"] = {"first": 2, "last": last,
                              "cost": [30.0, 50.0]}
    demand = {"beta0": beta0, "beta": beta, "external_jumps": jumps}
    return line, demand


def _interchange(members, frac_per_target):
    """members: list of (physical, directed_fw, directed_bw, n, station)."""
    pairs = []
    for _phys, fw, bw, n, s in members:
        pairs.append([fw, s])
        pairs.append([bw, n + 1 - s])
    tau = {}
    for phys, fw, bw, _n, _s in members:
        targets = [m for m in members if m[0] != phys]
        for src in (fw, bw):
            tau[src] = {}
            for _tp, tfw, tbw, _tn, _ts in targets:
                tau[src][tfw] = frac_per_target
                tau[src][tbw] = frac_per_target
    return {"station_pairs": pairs, "tau": tau}


def topology(name: str, short_set) -> dict:
    """Build one topology scenario; short_set lists directed line ids
    that get a short-turn section (empty for the plain variant)."""
    physical = {
        "2l0t": [("X", 7)],
        "4l1t": [("X", 7), ("Y", 7)],
        "4l2t": [("X", 14), ("Y", 7)],
        "6l1t": [("X", 7), ("Y", 7), ("Z", 7)],
        "6l2t": [("X", 7), ("Y", 7), ("Z", 7)],
        "6l3t": [("X", 7), ("Y", 7), ("Z", 7)],
        "8l3t": [("X", 7), ("Y", 7), ("Z", 7), ("W", 7)],
        "8l4t": [("X", 7), ("Y", 7), ("Z", 7), ("W", 7)],
    }[name]
    sizes = dict(physical)
    lines = []
    demand = {}
    ids = {}
    idx = 0
    for phys, n in physical:
        for suffix in ("1", "2"):
            lid = f"{phys}{suffix}"
            line, dem = _topology_line(lid, idx, n=n, short=lid in short_set)
            lines.append(line)
            demand[lid] = dem
            idx += 1
        ids[phys] = (f"{phys}1", f"{phys}2")

    def member(phys, station):
        fw, bw = ids[phys]
        return (phys, fw, bw, sizes[phys], station)

    meet_specs = {
        "2l0t": [],
        "4l1t": [[("X", 4), ("Y", 4)]],
        "4l2t": [[("X", 4), ("Y", 3)],
                 [("X", 10), ("Y", 5)]],
        "6l1t": [[("X", 4), ("Y", 4), ("Z", 4)]],
        "6l2t": [[("X", 3), ("Y", 4)],
                 [("X", 6), ("Z", 4)]],
        "6l3t": [[("X", 3), ("Y", 3)],
                 [("X", 6), ("Z", 3)],
                 [("Y", 6), ("Z", 6)]],
        "8l3t": [[("X", 3), ("Y", 3)],
                 [("X", 6), ("Z", 3)],
                 [("Y", 6), ("W", 3)]],
        "8l4t": [[("X", 3), ("Y", 3)],
                 [("X", 6), ("Z", 3)],
                 [("Y", 6), ("W", 3)],
                 [("Z", 6), ("W", 6)]],
    }[name]
    meets = [[member(phys, s) for phys, s in spec] for spec in meet_specs]
    interchanges = []
    for mem in meets:
        frac = 0.08 if len(mem) > 2 else 0.15
        interchanges.append(_interchange(mem, frac))
    return {
        "horizon_minutes": 12.0,
        "alpha": 0.9,
        "mu1": 0.25,
        "mu2": 0.15,
        "last_trip_mu_multiplier": 10.0,
        "lines": lines,
        "interchanges": interchanges,
        "demand": demand,
    }


SHORT_SETS = {
    "2l0t": ("X1", "X2"),
    "4l1t": ("X1", "X2", "Y1", "Y2"),
    "4l2t": ("X1", "X2", "Y1", "Y2"),
    "6l1t": ("X1", "X2"),
    "6l2t": ("X1", "X2", "Y1", "Y2"),
    "6l3t": ("X1", "X2"),
    "8l3t": ("X1", "X2", "Y1", "Y2"),
    "8l4t": ("X1", "X2", "Y1", "Y2"),
}


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    docs = {
        "case_study": case_study(short_turns=True),
        "case_study_nost": case_study(short_turns=False),
    }
    for name in SHORT_SETS:
        docs[name] = topology(name, short_set=())
        docs[f"{name}_st"] = topology(name, short_set=SHORT_SETS[name])
    for name, raw in sorted(docs.items()):
        scen = validate_scenario(raw)   # raises on any inconsistency
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(raw, indent=1, sort_keys=True) + "\n",
                        encoding="utf-8")
        nbin = sum(ln.max_trips * len(ln.capacities)
                   * (2 if ln.short_turn else 1) for ln in scen.lines)
        print(f"{name}: {len(scen.lines)} lines, "
              f"{sum(ln.n_stations for ln in scen.lines)} stations, "
              f"{nbin} trip binaries")


if __name__ == "__main__":
    main()
