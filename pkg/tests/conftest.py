"""Shared scenario builders for the test suite.

Everything here is deterministic: random instances take an explicit seed
and use numpy's Generator, so a failing case can be replayed exactly.
"""

from __future__ import annotations

import numpy as np
import pytest

from metroplan.domain import validate_scenario


def tiny_line_raw(lid="A", short=False, caps=(50,), costs=(10.0,),
                  st_costs=(4.0,), kbar=3, jumps=True):
    """One 4-station directed line, horizon 10 minutes."""
    ext = [[] for _ in range(4)]
    if jumps:
        ext[1] = [[3.0, 6.0]]
    line = {
        "id": lid,
        "d": [2.0, 1.0, 2.0],
        "e": [0.0, 0.5, 0.5, 0.0],
        "IS": 2.0,
        "max_trips": kbar,
        "capacities": list(caps),
        "trip_cost": list(costs),
        "p": [
            [0, 0.5, 0.3, 0.2],
            [0, 0, 0.5, 0.4],
            [0, 0, 0, 0.9],
            [0, 0, 0, 0],
        ],
        "gamma": [
            [0, 0.2, 0.3, 0.5],
            [0.2, 0, 0.2, 0.4],
            [0.3, 0.2, 0, 0.2],
            [0.5, 0.4, 0.2, 0],
        ],
    }
    if short:
        line["short_turn"] = {"first": 2, "last": 3,
                              "cost": list(st_costs)}
    demand = {"beta0": [5, 4, 3, 0], "beta": [2, 3, 2, 0],
              "external_jumps": ext}
    return line, demand


def tiny_scenario_raw(short=False, **kw):
    line, demand = tiny_line_raw(short=short, **kw)
    return {
        "horizon_minutes": 10.0,
        "alpha": 0.9,
        "mu1": 0.3,
        "mu2": 0.2,
        "last_trip_mu_multiplier": 10.0,
        "lines": [line],
        "interchanges": [],
        "demand": {line["id"]: demand},
    }


def coupled_toy_raw(short_a=False):
    """Two crossing lines with mutual transfers at one station."""
    a, da = tiny_line_raw("A", short=short_a, jumps=False)
    b, db = tiny_line_raw("B", short=False, jumps=False)
    return {
        "horizon_minutes": 10.0,
        "alpha": 0.9,
        "mu1": 0.3,
        "mu2": 0.2,
        "last_trip_mu_multiplier": 10.0,
        "lines": [a, b],
        "interchanges": [{
            "station_pairs": [["A", 3], ["B", 2]],
            "tau": {"A": {"B": 0.3}, "B": {"A": 0.3}},
        }],
        "demand": {"A": da, "B": db},
    }


def random_tiny_raw(seed: int, allow_short=True):
    """A random single-line instance small enough to brute force."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 5))
    kbar = 3
    ncaps = int(rng.integers(1, 3))
    caps = sorted(rng.choice([30, 50, 80, 120], size=ncaps, replace=False))
    short = allow_short and n >= 3 and bool(rng.integers(0, 2))
    d = [float(rng.integers(2, 5)) for _ in range(n - 1)]
    e = [0.0] + [float(rng.choice([0.0, 0.5]))
                 for _ in range(n - 2)] + [0.0]
    p = [[0.0] * n for _ in range(n)]
    for i in range(n - 1):
        raw = rng.random(n - 1 - i)
        raw /= max(raw.sum(), 1e-9)
        share = float(rng.uniform(0.6, 1.0))
        for off, j in enumerate(range(i + 1, n)):
            p[i][j] = round(share * float(raw[off]), 4)
    gamma = [[0.0 if i == j else round(float(rng.uniform(0.1, 0.9)), 3)
              for j in range(n)] for i in range(n)]
    T = 10.0
    line = {
        "id": "R",
        "d": d,
        "e": e,
        "IS": 2.0,
        "max_trips": kbar,
        "capacities": [int(q) for q in caps],
        "trip_cost": [round(float(rng.uniform(5, 20)) * (qi + 1), 2)
                      for qi in range(ncaps)],
        "p": p,
        "gamma": gamma,
    }
    if short:
        # keep the merge-trip index within the trip count
        first = 2
        last = int(rng.integers(first + 1, n + 1))
        head = d[0] + e[1]
        if int(head // 2.0) + 1 < kbar:
            line["short_turn"] = {
                "first": first, "last": last,
                "cost": [round(c / 3.0, 2) for c in line["trip_cost"]],
            }
    beta0 = [round(float(rng.uniform(0, 8)), 2) for _ in range(n)]
    beta = [round(float(rng.uniform(0, 4)), 2) for _ in range(n)]
    beta0[-1] = beta[-1] = 0.0
    ext = [[] for _ in range(n)]
    if rng.integers(0, 2):
        station = int(rng.integers(0, n - 1))
        ext[station] = [[round(float(rng.uniform(1, T - 1)), 2),
                         float(rng.integers(2, 15))]]
    return {
        "horizon_minutes": T,
        "alpha": round(float(rng.uniform(0.5, 1.0)), 2),
        "mu1": round(float(rng.uniform(0.1, 0.5)), 2),
        "mu2": round(float(rng.uniform(0.1, 0.5)), 2),
        "last_trip_mu_multiplier": 10.0,
        "lines": [line],
        "interchanges": [],
        "demand": {"R": {"beta0": beta0, "beta": beta,
                         "external_jumps": ext}},
    }


@pytest.fixture
def tiny_scenario():
    return validate_scenario(tiny_scenario_raw())


@pytest.fixture
def tiny_short_scenario():
    return validate_scenario(tiny_scenario_raw(short=True))


@pytest.fixture
def coupled_toy():
    return validate_scenario(coupled_toy_raw())
