"""Scenario and solution documents: JSON round trips and fingerprints.

Documents are hashed over their canonical JSON form (sorted keys, no
whitespace); a solution document embeds the fingerprint of the scenario
it was solved from so stale pairings are detected on load.
"""

from __future__ import annotations

import hashlib
import json
from typing import Dict, Mapping, Optional, Tuple

from .domain import NetworkScenario, validate_scenario
from .solution import LinePlanSolution, NetworkSolution, SolveReport, TripPlan

DOCUMENT_FORMAT = "metroplan-solution"
DOCUMENT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def fingerprint(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def load_scenario(path: str) -> Tuple[dict, NetworkScenario]:
    """Read and validate a scenario file; returns (raw document, scenario)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return raw, validate_scenario(raw)


def _trip_to_json(t: TripPlan) -> dict:
    return {"kind": t.kind, "capacity": t.capacity, "t1": t.t1, "w": t.w,
            "f": list(t.f), "g": list(t.g), "h": list(t.h), "x": list(t.x),
            "demand": list(t.demand)}


def _trip_from_json(d: Mapping) -> TripPlan:
    return TripPlan(kind=d["kind"], capacity=int(d["capacity"]),
                    t1=float(d["t1"]), w=float(d["w"]),
                    f=tuple(d["f"]), g=tuple(d["g"]), h=tuple(d["h"]),
                    x=tuple(d["x"]), demand=tuple(d["demand"]))


def solution_to_document(scenario_raw: Mapping,
                         solution: NetworkSolution) -> dict:
    doc = {
        "format": DOCUMENT_FORMAT,
        "version": DOCUMENT_VERSION,
        "scenario_fingerprint": fingerprint(scenario_raw),
        "objective": solution.objective,
        "verified": solution.verified,
        "lines": {
            lid: {
                "objective": plan.objective,
                "trips": [_trip_to_json(t) for t in plan.trips],
            }
            for lid, plan in sorted(solution.lines.items())
        },
    }
    if solution.report is not None:
        r = solution.report
        doc["report"] = {"status": r.status, "objective": r.objective,
                         "best_bound": r.best_bound, "gap": r.gap,
                         "nodes": r.nodes, "wall_time": r.wall_time}
    if solution.trace:
        doc["trace"] = [
            {"iteration": t.iteration, "line_id": t.line_id,
             "objective": t.objective, "deviation": t.deviation,
             "skipped": t.skipped, "status": t.status, "nodes": t.nodes,
             "wall_time": t.wall_time}
            for t in solution.trace]
    return doc


def solution_from_document(doc: Mapping,
                           scenario_raw: Optional[Mapping] = None) -> NetworkSolution:
    if doc.get("format") != DOCUMENT_FORMAT:
        raise ValueError("not a solution document")
    if scenario_raw is not None:
        fp = fingerprint(scenario_raw)
        if doc.get("scenario_fingerprint") != fp:
            raise ValueError(
                "solution was produced from a different scenario "
                f"(document {doc.get('scenario_fingerprint')!r}, file {fp!r})")
    lines: Dict[str, LinePlanSolution] = {}
    for lid, pd in doc["lines"].items():
        lines[lid] = LinePlanSolution(
            line_id=lid, objective=float(pd["objective"]),
            trips=tuple(_trip_from_json(t) for t in pd["trips"]))
    report = None
    if "report" in doc:
        r = doc["report"]
        report = SolveReport(status=r["status"], objective=r["objective"],
                             best_bound=r["best_bound"], gap=r["gap"],
                             nodes=int(r["nodes"]),
                             wall_time=float(r["wall_time"]))
    return NetworkSolution(lines=lines,
                           objective=float(doc["objective"]),
                           report=report,
                           verified=bool(doc.get("verified", False)))


def save_document(doc: Mapping, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(doc))
        fh.write("\n")


def load_document(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Bundled example scenarios


def bundled_scenario_names():
    from importlib import resources

    names = []
    for entry in resources.files("metroplan.data.scenarios").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-5])
    return sorted(names)


def load_bundled_scenario(name: str) -> Tuple[dict, NetworkScenario]:
    from importlib import resources

    ref = resources.files("metroplan.data.scenarios").joinpath(f"{name}.json")
    raw = json.loads(ref.read_text(encoding="utf-8"))
    return raw, validate_scenario(raw)
