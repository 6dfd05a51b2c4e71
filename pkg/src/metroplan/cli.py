"""Command-line interface.

Subcommands: validate, solve, verify, report, diagram, dump-model.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from typing import Optional

from .bnb import BnbOptions, EQUAL, GREATER, MilpModel, solve_milp
from .demand import freeze_network_demand
from .domain import ScenarioError, validate_scenario
from .formulation import (build_joint_model, build_line_model,
                          extract_line_plan)
from .heuristic import HeuristicOptions, optimize_network
from .io import (fingerprint, load_document, load_scenario, save_document,
                 solution_from_document, solution_to_document)
from .report import render_csv, render_json, render_table
from .solution import NetworkSolution, SolveReport
from .verifier import check_solution


def _bnb_options(args) -> BnbOptions:
    return BnbOptions(
        mip_gap=args.mip_gap,
        time_limit=args.time_limit,
        node_limit=args.node_limit,
        deterministic=args.seedless_deterministic,
    )


def _write_output(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_validate(args) -> int:
    try:
        raw, scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        for path, msg in exc.violations:
            print(f"{path}: {msg}", file=sys.stderr)
        return 1
    print(f"ok: {len(scenario.lines)} lines, "
          f"fingerprint {fingerprint(raw)}")
    return 0


def cmd_solve(args) -> int:
    raw, scenario = load_scenario(args.scenario)
    bnb = _bnb_options(args)
    if args.joint:
        model = build_joint_model(scenario, with_cuts=not args.no_cuts,
                                  binary_cap=args.binary_cap)
        res = solve_milp(model, bnb)
        if res.objective is None:
            print(f"joint solve ended: {res.status}", file=sys.stderr)
            return 1
        plans = {ln.id: extract_line_plan(res.values, ln, scenario.globals)
                 for ln in scenario.lines}
        solution = NetworkSolution(
            lines=plans, objective=sum(p.objective for p in plans.values()),
            report=SolveReport(status=res.status, objective=res.objective,
                               best_bound=res.best_bound, gap=res.gap,
                               nodes=res.nodes, wall_time=res.wall_time))
    else:
        opts = HeuristicOptions(epsilon=args.epsilon,
                                max_iterations=args.max_iterations,
                                with_cuts=not args.no_cuts,
                                refine=not args.no_refine,
                                bnb=bnb)
        solution = optimize_network(scenario, opts)
    ok, errs = check_solution(scenario, solution)
    if not ok and not args.quiet:
        for e in errs:
            print(f"verification: {e}", file=sys.stderr)
    solution = NetworkSolution(lines=solution.lines,
                               objective=solution.objective,
                               report=solution.report,
                               verified=ok, trace=solution.trace)
    doc = solution_to_document(raw, solution)
    _write_output(json.dumps(doc, sort_keys=True, indent=None,
                             separators=(",", ":")) + "\n", args.output)
    if not args.quiet:
        print(f"objective {solution.objective:.6f} "
              f"({'verified' if ok else 'NOT verified'})", file=sys.stderr)
    return 0 if ok else 2


def cmd_verify(args) -> int:
    raw, scenario = load_scenario(args.scenario)
    doc = load_document(args.solution)
    try:
        solution = solution_from_document(doc, raw)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    ok, errs = check_solution(scenario, solution, tol=args.tolerance)
    if ok:
        print("verified: all operational rules hold")
        return 0
    for e in errs:
        print(e, file=sys.stderr)
    return 1


def cmd_report(args) -> int:
    raw, scenario = load_scenario(args.scenario)
    solution = solution_from_document(load_document(args.solution), raw)
    if args.format == "table":
        text = render_table(scenario, solution)
    elif args.format == "csv":
        text = render_csv(scenario, solution)
    else:
        text = render_json(scenario, solution) + "\n"
    _write_output(text, args.output)
    return 0


def cmd_diagram(args) -> int:
    from .diagram import svg_diagram

    raw, scenario = load_scenario(args.scenario)
    solution = solution_from_document(load_document(args.solution), raw)
    svg = svg_diagram(scenario, solution,
                      line_ids=args.lines.split(",") if args.lines else None)
    _write_output(svg, args.output)
    return 0


def model_to_lp_text(model: MilpModel) -> str:
    """Render a model in the common LP text layout."""
    buf = io.StringIO()
    w = buf.write
    w(f"\\ model {model.name}\n")
    if model.objective_offset:
        w(f"\\ objective offset {model.objective_offset!r}\n")
    w("Minimize\n obj:")
    terms = [(v.name, v.obj) for v in model.variables if v.obj]
    if not terms:
        w(" 0")
    for name, c in terms:
        w(f" {'+' if c >= 0 else '-'} {abs(c)!r} {name}")
    w("\nSubject To\n")
    for row in model.constraints:
        w(f" {row.name}:")
        for j, c in row.coeffs:
            w(f" {'+' if c >= 0 else '-'} {abs(c)!r} {model.variables[j].name}")
        op = {EQUAL: "=", GREATER: ">="}.get(row.sense, "<=")
        w(f" {op} {row.rhs!r}\n")
    w("Bounds\n")
    for v in model.variables:
        w(f" {v.lb!r} <= {v.name} <= {v.ub!r}\n")
    ints = [v.name for v in model.variables if v.is_int]
    if ints:
        w("Binaries\n")
        for name in ints:
            w(f" {name}\n")
    w("End\n")
    return buf.getvalue()


def cmd_dump_model(args) -> int:
    raw, scenario = load_scenario(args.scenario)
    if args.joint:
        model = build_joint_model(scenario, with_cuts=not args.no_cuts,
                                  binary_cap=args.binary_cap)
        _write_output(model_to_lp_text(model), args.output)
        return 0
    frozen = freeze_network_demand(scenario, {})
    line_ids = [args.line] if args.line else [ln.id for ln in scenario.lines]
    out = []
    for lid in line_ids:
        line = scenario.line(lid)
        model = build_line_model(line, frozen[lid], scenario.globals,
                                 with_cuts=not args.no_cuts)
        out.append(model_to_lp_text(model))
    _write_output("".join(out), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="metroplan",
        description="Metro line planning and timetabling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common_solver(sp):
        sp.add_argument("--mip-gap", type=float, default=1e-6)
        sp.add_argument("--time-limit", type=float, default=None,
                        help="seconds per exact solve")
        sp.add_argument("--node-limit", type=int, default=None)
        sp.add_argument("--no-cuts", action="store_true",
                        help="drop the demand-interval monotonicity cuts")
        sp.add_argument("--seedless-deterministic", action="store_true",
                        help="fully reproducible output: fixed tie-breaks, "
                             "no wall-clock limits, zeroed timings")
        sp.add_argument("--binary-cap", type=int, default=60,
                        help="refuse joint models above this binary count")

    sp = sub.add_parser("validate", help="check a scenario file")
    sp.add_argument("scenario")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="plan all lines of a scenario")
    sp.add_argument("scenario")
    sp.add_argument("-o", "--output", default="-")
    sp.add_argument("--joint", action="store_true",
                    help="solve the exact coupled model (tiny instances)")
    sp.add_argument("--epsilon", type=float, default=1e-3,
                    help="per-line relative stabilization tolerance")
    sp.add_argument("--max-iterations", type=int, default=5)
    sp.add_argument("--no-refine", action="store_true",
                    help="skip the final network-consistent re-solve")
    sp.add_argument("-q", "--quiet", action="store_true")
    add_common_solver(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("verify", help="check a solution document")
    sp.add_argument("scenario")
    sp.add_argument("solution")
    sp.add_argument("--tolerance", type=float, default=1e-6)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("report", help="tabulate a solution")
    sp.add_argument("scenario")
    sp.add_argument("solution")
    sp.add_argument("--format", choices=("table", "csv", "json"),
                    default="table")
    sp.add_argument("-o", "--output", default="-")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("diagram", help="space-time SVG of a solution")
    sp.add_argument("scenario")
    sp.add_argument("solution")
    sp.add_argument("--lines", default=None,
                    help="comma-separated line ids (default: all)")
    sp.add_argument("-o", "--output", default="-")
    sp.set_defaults(func=cmd_diagram)

    sp = sub.add_parser("dump-model", help="write models as LP text")
    sp.add_argument("scenario")
    sp.add_argument("--line", default=None, help="one line id")
    sp.add_argument("--joint", action="store_true")
    sp.add_argument("-o", "--output", default="-")
    add_common_solver(sp)
    sp.set_defaults(func=cmd_dump_model)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for path, msg in exc.violations:
            print(f"{path}: {msg}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
