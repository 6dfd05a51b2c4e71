"""Solution containers shared by the solver, heuristic and verifier."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

WHOLE = "whole"
SHORT = "short"
FAKE = "fake"


@dataclass(frozen=True)
class TripPlan:
    """One (possibly fake) trip of a line.

    Flow arrays are full-length per station; ``g`` is zero outside the
    short-turn section and for non-short trips.  ``demand`` holds the
    cumulative demand value the model saw at each departure.
    """

    kind: str                      # "whole" | "short" | "fake"
    capacity: int                  # 0 for fake trips
    t1: float
    w: float
    f: Tuple[float, ...]
    g: Tuple[float, ...]
    h: Tuple[float, ...]
    x: Tuple[float, ...]
    demand: Tuple[float, ...]

    @property
    def is_true(self) -> bool:
        return self.kind != FAKE


@dataclass(frozen=True)
class LinePlanSolution:
    line_id: str
    trips: Tuple[TripPlan, ...]
    objective: float               # per-line cost (Cap - RewPPass + NonServed)


@dataclass(frozen=True)
class SolveReport:
    status: str                    # "optimal" | "feasible" | "infeasible" | "limit"
    objective: Optional[float]
    best_bound: Optional[float]
    gap: Optional[float]
    nodes: int
    wall_time: float


@dataclass(frozen=True)
class NetworkSolution:
    lines: Mapping[str, LinePlanSolution]
    objective: float
    report: Optional[SolveReport] = None
    verified: bool = False
    trace: Tuple = field(default_factory=tuple)
