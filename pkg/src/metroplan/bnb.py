"""Mixed-integer linear models and an exact branch-and-bound solver.

Models are built by name with sparse rows, compiled once into the dense
equality form the simplex kernel expects (one slack per inequality, with
finite bounds derived from the row's activity range), and explored
best-bound-first.  Branching picks the first fractional integer variable
in declaration order; all tie-breaks are index-based, so a solve is
reproducible run to run.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .simplex import solve_lp

LESS = "<="
GREATER = ">="
EQUAL = "=="


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float
    ub: float
    is_int: bool
    obj: float


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Tuple[Tuple[int, float], ...]
    sense: str
    rhs: float


class MilpModel:
    """Sparse minimization model with named variables and rows."""

    def __init__(self, name: str = "model") -> None:
        self.name = name
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective_offset = 0.0
        self.metadata: Dict[str, object] = {}
        self._index: Dict[str, int] = {}

    def add_var(self, name: str, lb: float, ub: float,
                is_int: bool = False, obj: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if not (np.isfinite(lb) and np.isfinite(ub)):
            raise ValueError(f"variable {name!r} needs finite bounds")
        if ub < lb - 1e-12:
            raise ValueError(f"variable {name!r} has empty bounds [{lb}, {ub}]")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lb), float(ub), is_int, float(obj)))
        self._index[name] = idx
        return idx

    def var(self, name: str) -> int:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index

    def add_obj(self, idx: int, coeff: float) -> None:
        v = self.variables[idx]
        self.variables[idx] = Variable(v.name, v.lb, v.ub, v.is_int, v.obj + coeff)

    def add_constraint(self, name: str, coeffs: Mapping[int, float],
                       sense: str, rhs: float) -> None:
        if sense not in (LESS, GREATER, EQUAL):
            raise ValueError(f"bad sense {sense!r}")
        items = tuple(sorted((i, float(c)) for i, c in coeffs.items() if c != 0.0))
        self.constraints.append(Constraint(name, items, sense, float(rhs)))

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def integer_indices(self) -> Tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.is_int)


@dataclass
class CompiledModel:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    n_structural: int
    int_indices: np.ndarray
    trivially_infeasible: bool = False


def compile_model(model: MilpModel) -> CompiledModel:
    """Flatten the model into dense equality form A x = b with box bounds.

    Inequalities gain one slack each; the slack's bounds come from the
    row's activity range over the variable box, so every bound stays
    finite as the simplex kernel requires.
    """
    n = model.num_vars
    m = model.num_constraints
    vlb = np.array([v.lb for v in model.variables])
    vub = np.array([v.ub for v in model.variables])
    n_slack = sum(1 for r in model.constraints if r.sense != EQUAL)
    ncols = n + n_slack
    A = np.zeros((m, ncols))
    b = np.zeros(m)
    lb = np.zeros(ncols)
    ub = np.zeros(ncols)
    lb[:n] = vlb
    ub[:n] = vub
    c = np.zeros(ncols)
    for i, v in enumerate(model.variables):
        c[i] = v.obj
    infeasible = False
    s = n
    for i, row in enumerate(model.constraints):
        act_lo = act_hi = 0.0
        for j, coef in row.coeffs:
            A[i, j] = coef
            if coef > 0:
                act_lo += coef * vlb[j]
                act_hi += coef * vub[j]
            else:
                act_lo += coef * vub[j]
                act_hi += coef * vlb[j]
        b[i] = row.rhs
        if row.sense == EQUAL:
            if act_lo > row.rhs + 1e-9 or act_hi < row.rhs - 1e-9:
                infeasible = True
            continue
        # a.x + slack = rhs, so slack spans rhs minus the activity range
        A[i, s] = 1.0
        slo = row.rhs - act_hi
        shi = row.rhs - act_lo
        if row.sense == LESS:
            slo = max(slo, 0.0)
        else:
            shi = min(shi, 0.0)
        if slo > shi + 1e-9:
            infeasible = True
            shi = slo
        lb[s] = slo
        ub[s] = shi
        s += 1
    return CompiledModel(A=A, b=b, c=c, lb=lb, ub=ub, n_structural=n,
                         int_indices=np.array(model.integer_indices, dtype=np.int64),
                         trivially_infeasible=infeasible)


@dataclass
class BnbOptions:
    mip_gap: float = 1e-6
    int_tol: float = 1e-6
    time_limit: Optional[float] = None
    node_limit: Optional[int] = None
    deterministic: bool = False   # ignore wall clock limits, zero reported time
    log: bool = False


@dataclass
class MilpResult:
    status: str                   # "optimal" | "feasible" | "infeasible" | "limit"
    objective: Optional[float]
    best_bound: Optional[float]
    gap: Optional[float]
    nodes: int
    wall_time: float
    values: Dict[str, float] = field(default_factory=dict)
    x: Optional[np.ndarray] = None

    def value(self, name: str) -> float:
        return self.values[name]


def _gap(incumbent: float, bound: float) -> float:
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-9)


def solve_milp(model: MilpModel, options: Optional[BnbOptions] = None,
               warm_start: Optional[Mapping[str, float]] = None) -> MilpResult:
    """Exact best-bound branch and bound over the model's integer variables."""
    opt = options or BnbOptions()
    start = time.perf_counter()
    comp = compile_model(model)

    def elapsed() -> float:
        return 0.0 if opt.deterministic else time.perf_counter() - start

    def finish(status, obj, bound, nodes, x):
        values = {}
        if x is not None:
            xs = x[:comp.n_structural].copy()
            for j in comp.int_indices:
                xs[j] = round(xs[j])
            for i, v in enumerate(model.variables):
                values[v.name] = float(xs[i])
            obj = float(comp.c[:comp.n_structural] @ xs) + model.objective_offset
        else:
            xs = None
        gap = None
        if obj is not None and bound is not None:
            gap = _gap(obj, bound)
        return MilpResult(status=status, objective=obj, best_bound=bound,
                          gap=gap, nodes=nodes, wall_time=elapsed(),
                          values=values, x=xs)

    if comp.trivially_infeasible:
        return finish("infeasible", None, None, 0, None)

    ints = comp.int_indices
    tol = opt.int_tol
    inc_obj: Optional[float] = None
    inc_x: Optional[np.ndarray] = None
    nodes = 0

    def lp(lbn, ubn, warm):
        return solve_lp(comp.A, comp.b, comp.c, lbn, ubn, warm_vstat=warm)

    # a hint fixes the binaries it names; if the rest solves feasibly and
    # integrally it seeds the incumbent before the search starts
    if warm_start:
        lbh = comp.lb.copy()
        ubh = comp.ub.copy()
        ok = True
        for name, val in warm_start.items():
            if not model.has_var(name):
                ok = False
                break
            j = model.var(name)
            r = round(val)
            if r < comp.lb[j] - tol or r > comp.ub[j] + tol:
                ok = False
                break
            lbh[j] = ubh[j] = r
        if ok:
            sol = lp(lbh, ubh, None)
            if sol.status == "optimal":
                frac = np.abs(sol.x[ints] - np.round(sol.x[ints]))
                if ints.size == 0 or frac.max() <= tol:
                    inc_obj = sol.objective
                    inc_x = sol.x

    root = lp(comp.lb, comp.ub, None)
    nodes += 1
    if root.status == "infeasible":
        if inc_x is not None:   # hint feasible but root not: numerical trouble
            return finish("feasible", inc_obj, None, nodes, inc_x)
        return finish("infeasible", None, None, nodes, None)
    if root.status != "optimal":
        return finish("limit", inc_obj, None, nodes, inc_x)

    heap: List[Tuple[float, int, np.ndarray, np.ndarray, Optional[np.ndarray]]] = []
    counter = 0
    heapq.heappush(heap, (root.objective, counter, comp.lb.copy(), comp.ub.copy(),
                          root.vstat))
    best_bound = root.objective
    status = "optimal"

    while heap:
        best_bound = heap[0][0]
        if inc_obj is not None and _gap(inc_obj, best_bound) <= opt.mip_gap:
            break
        if opt.node_limit is not None and nodes >= opt.node_limit:
            status = "limit"
            break
        if (opt.time_limit is not None and not opt.deterministic
                and time.perf_counter() - start > opt.time_limit):
            status = "limit"
            break
        bound, _, lbn, ubn, warm = heapq.heappop(heap)
        if inc_obj is not None and bound >= inc_obj - 1e-9:
            continue
        sol = lp(lbn, ubn, warm)
        nodes += 1
        if sol.status != "optimal":
            continue
        if inc_obj is not None and sol.objective >= inc_obj - 1e-9:
            continue
        if ints.size:
            frac = np.abs(sol.x[ints] - np.round(sol.x[ints]))
            fractional = np.nonzero(frac > tol)[0]
            # branch on the first fractional integer in declaration order:
            # earlier variables shape the structure the later ones hang on
            worst = int(fractional[0]) if fractional.size else 0
            most_frac = float(frac[worst])
        else:
            most_frac = 0.0
        if most_frac <= tol:
            inc_obj = sol.objective
            inc_x = sol.x
            if opt.log:
                print(f"node {nodes}: incumbent {inc_obj:.6f}")
            continue
        j = int(ints[worst])
        xval = sol.x[j]
        fl = np.floor(xval + tol)
        # down child first so equal bounds pop in a fixed order
        for lo, hi in ((lbn[j], fl), (fl + 1.0, ubn[j])):
            if lo > hi + 1e-9:
                continue
            lbc = lbn.copy()
            ubc = ubn.copy()
            lbc[j] = lo
            ubc[j] = hi
            counter += 1
            heapq.heappush(heap, (sol.objective, counter, lbc, ubc, sol.vstat))

    if heap:
        best_bound = min(best_bound, heap[0][0])
    else:
        best_bound = inc_obj if inc_obj is not None else best_bound

    if inc_x is None:
        if status == "limit":
            return finish("limit", None, best_bound, nodes, None)
        return finish("infeasible", None, best_bound, nodes, None)
    if status == "limit" and _gap(inc_obj, best_bound) > opt.mip_gap:
        return finish("feasible", inc_obj, best_bound, nodes, inc_x)
    return finish("optimal", inc_obj, best_bound, nodes, inc_x)
