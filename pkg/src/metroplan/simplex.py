"""Bounded-variable primal simplex on dense equality-form LPs.

The pivot loop is the hot path of the whole package (it runs once per
branch-and-bound node), so it is compiled with numba by default.  Setting
the environment variable ``METROPLAN_PURE_NUMPY=1`` before import selects
the identical pure-numpy code path instead; both paths execute the same
source, so results agree bit for bit.

Problem form: minimize c'x subject to A x = b, lb <= x <= ub with every
bound finite.  Inequalities must be converted by the caller (see
``metroplan.bnb.compile_model``).  Feasibility is established in phase 1
with one artificial variable per row; Bland's rule is engaged after a run
of degenerate pivots to rule out cycling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_ITER_LIMIT = 2
STATUS_SINGULAR = 3

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2

REFACTOR_EVERY = 50


def _refactor(A, b, lb, ub, vstat, basis, binv, xb):
    """Recompute the basis inverse and basic values from scratch."""
    B = np.ascontiguousarray(A[:, basis])
    try:
        binv_new = np.linalg.inv(B)
    except Exception:
        return 1
    if not np.all(np.isfinite(binv_new)):
        return 1
    binv[:, :] = binv_new
    at_lower = vstat == _AT_LOWER
    at_upper = vstat == _AT_UPPER
    nbval = np.where(at_lower, lb, 0.0) + np.where(at_upper, ub, 0.0)
    rhs = b - A @ nbval
    xb[:] = binv @ rhs
    return 0


def _simplex_phase(A, b, c, lb, ub, vstat, basis, binv, xb, n_price,
                   tol, piv_tol, max_iter, degen_limit):
    """Run simplex pivots until optimal for cost c.  Mutates all state.

    n_price limits pricing to the first n_price columns (artificials are
    excluded from re-entering once nonbasic).  Returns (status, iters).
    """
    m, ncols = A.shape
    span = ub - lb
    movable = span > piv_tol
    it = 0
    degen_run = 0
    bland = False
    while it < max_iter:
        it += 1
        y = c[basis] @ binv
        d = c - y @ A
        viol = np.zeros(ncols)
        low_mask = (vstat == _AT_LOWER) & movable
        up_mask = (vstat == _AT_UPPER) & movable
        viol[low_mask] = -d[low_mask]
        viol[up_mask] = d[up_mask]
        viol[n_price:] = 0.0
        if bland:
            cand = np.nonzero(viol > tol)[0]
            if cand.size == 0:
                return STATUS_OPTIMAL, it
            enter = cand[0]
        else:
            enter = int(np.argmax(viol))
            if viol[enter] <= tol:
                return STATUS_OPTIMAL, it
        enter_dir = 1.0 if vstat[enter] == _AT_LOWER else -1.0
        alpha = binv @ np.ascontiguousarray(A[:, enter])
        delta = -enter_dir * alpha  # d x_B / d t
        big = 1e300
        lbb = lb[basis]
        ubb = ub[basis]
        t_dn = np.where(delta < -piv_tol, (xb - lbb) / np.where(delta < -piv_tol, -delta, 1.0), big)
        t_up = np.where(delta > piv_tol, (ubb - xb) / np.where(delta > piv_tol, delta, 1.0), big)
        t_rows = np.minimum(t_dn, t_up)
        t_rows = np.maximum(t_rows, 0.0)
        t_flip = span[enter]
        row_min = t_rows.min() if m > 0 else big
        t_max = min(t_flip, row_min)
        leave = -1
        if row_min <= t_flip + 1e-12 and row_min < big:
            ties = np.nonzero(t_rows <= row_min + 1e-12)[0]
            # deterministic tie-break: largest pivot magnitude for
            # numerical stability, then smallest leaving column index
            best = ties[0]
            best_piv = abs(alpha[best])
            for ti in ties[1:]:
                api = abs(alpha[ti])
                if (api > best_piv * (1.0 + 1e-12)
                        or (api >= best_piv * (1.0 - 1e-12)
                            and basis[ti] < basis[best])):
                    best = ti
                    best_piv = api
            leave = best
            t_max = t_rows[leave]
        if t_max <= piv_tol:
            degen_run += 1
            if degen_run > degen_limit:
                bland = True
            t_max = max(t_max, 0.0)
        else:
            degen_run = 0
        xb += delta * t_max
        if leave == -1:
            vstat[enter] = _AT_UPPER if enter_dir > 0 else _AT_LOWER
            continue
        piv = alpha[leave]
        if abs(piv) < piv_tol:
            return STATUS_SINGULAR, it
        out = basis[leave]
        vstat[out] = _AT_UPPER if t_up[leave] <= t_dn[leave] else _AT_LOWER
        enter_val = (lb[enter] if enter_dir > 0 else ub[enter]) + enter_dir * t_max
        basis[leave] = enter
        vstat[enter] = _BASIC
        xb[leave] = enter_val
        # rank-1 update of the basis inverse
        brow = binv[leave] / piv
        alpha_col = alpha.copy()
        alpha_col[leave] = 0.0
        binv -= np.outer(alpha_col, brow)
        binv[leave, :] = brow
        if it % REFACTOR_EVERY == 0:
            if _refactor(A, b, lb, ub, vstat, basis, binv, xb) != 0:
                return STATUS_SINGULAR, it
    return STATUS_ITER_LIMIT, it


def _dual_simplex_phase(A, b, c, lb, ub, vstat, basis, binv, xb,
                        tol, piv_tol, max_iter):
    """Dual simplex: restore primal feasibility from a dual-feasible basis.

    Used for warm re-solves after bound tightening (branch-and-bound
    children): the parent's optimal basis stays dual feasible, so a few
    pivots usually suffice.  Returns (status, iters); STATUS_INFEASIBLE is
    a valid infeasibility proof only if the starting basis was dual
    feasible, which the caller checks.
    """
    m, ncols = A.shape
    span = ub - lb
    it = 0
    while it < max_iter:
        it += 1
        lbb = lb[basis]
        ubb = ub[basis]
        r = -1
        worst = tol * 1e3 + 1e-9
        leave_low = True
        for i in range(m):
            vlo = lbb[i] - xb[i]
            vhi = xb[i] - ubb[i]
            if vlo > worst:
                worst = vlo
                r = i
                leave_low = True
            if vhi > worst:
                worst = vhi
                r = i
                leave_low = False
        if r == -1:
            return STATUS_OPTIMAL, it
        arow = binv[r] @ A
        y = c[basis] @ binv
        d = c - y @ A
        bound = lbb[r] if leave_low else ubb[r]
        used = np.zeros(ncols, dtype=np.uint8)
        while True:
            resid = xb[r] - bound
            if (leave_low and resid >= -piv_tol) or \
                    (not leave_low and resid <= piv_tol):
                break   # bound flips alone repaired the violation
            best = -1
            best_ratio = 1e300
            best_piv = 0.0
            for j in range(ncols):
                if used[j] or vstat[j] == _BASIC or span[j] <= piv_tol:
                    continue
                a = arow[j]
                if leave_low:
                    ok = ((a < -piv_tol) if vstat[j] == _AT_LOWER
                          else (a > piv_tol))
                else:
                    ok = ((a > piv_tol) if vstat[j] == _AT_LOWER
                          else (a < -piv_tol))
                if not ok:
                    continue
                ratio = abs(d[j] / a)
                if (ratio < best_ratio - 1e-12
                        or (ratio < best_ratio + 1e-12
                            and abs(a) > best_piv)):
                    best = j
                    best_ratio = ratio
                    best_piv = abs(a)
            if best == -1:
                return STATUS_INFEASIBLE, it
            j = best
            delta = resid / arow[j]
            if abs(delta) <= span[j] + 1e-12:
                # entering variable stays within its box: pivot
                alpha = binv @ np.ascontiguousarray(A[:, j])
                piv = alpha[r]
                if abs(piv) < piv_tol:
                    return STATUS_SINGULAR, it
                xb -= delta * alpha
                enter_val = ((lb[j] if vstat[j] == _AT_LOWER else ub[j])
                             + delta)
                out = basis[r]
                vstat[out] = _AT_LOWER if leave_low else _AT_UPPER
                basis[r] = j
                vstat[j] = _BASIC
                xb[r] = enter_val
                brow = binv[r] / piv
                alpha_col = alpha.copy()
                alpha_col[r] = 0.0
                binv -= np.outer(alpha_col, brow)
                binv[r, :] = brow
                break
            # span exhausted: flip the nonbasic to its other bound and
            # keep searching (reduced costs are unaffected by flips)
            step = span[j] if vstat[j] == _AT_LOWER else -span[j]
            alpha = binv @ np.ascontiguousarray(A[:, j])
            xb -= step * alpha
            vstat[j] = _AT_UPPER if vstat[j] == _AT_LOWER else _AT_LOWER
            used[j] = 1
        if it % REFACTOR_EVERY == 0:
            if _refactor(A, b, lb, ub, vstat, basis, binv, xb) != 0:
                return STATUS_SINGULAR, it
    return STATUS_ITER_LIMIT, it


def _solve_core(A, b, c, lb, ub, vstat_in, use_warm, max_iter, tol, piv_tol):
    """Two-phase simplex.  Returns (status, x, y, vstat, iters)."""
    m, n = A.shape
    ncols = n + m
    Ax = np.zeros((m, ncols))
    Ax[:, :n] = A
    for i in range(m):
        Ax[i, n + i] = 1.0
    lbx = np.zeros(ncols)
    ubx = np.zeros(ncols)
    lbx[:n] = lb
    ubx[:n] = ub
    vs = np.full(ncols, _AT_LOWER, dtype=np.int64)
    basis = np.empty(m, dtype=np.int64)
    binv = np.eye(m)
    xb = np.zeros(m)
    iters = 0

    warm_ok = False
    if use_warm:
        # the descriptor may cover artificial columns too (same-shape
        # re-solve); a degenerate optimum can leave artificials basic
        nwarm = min(vstat_in.shape[0], ncols)
        nb = 0
        for j in range(nwarm):
            vs[j] = vstat_in[j]
            if vstat_in[j] == _BASIC:
                if nb < m:
                    basis[nb] = j
                nb += 1
        if nb == m and _refactor(Ax, b, lbx, ubx, vs, basis, binv, xb) == 0:
            feas_tol = tol * 1e3 + 1e-9
            warm_ok = bool(np.all(xb >= lbx[basis] - feas_tol)
                           and np.all(xb <= ubx[basis] + feas_tol))
            if not warm_ok:
                # primal infeasible after bound tightening: if the basis is
                # still dual feasible, the dual simplex restores feasibility
                # in a few pivots instead of a full cold phase 1
                cw = np.zeros(ncols)
                cw[:n] = c
                yw = cw[basis] @ binv
                dw = cw - yw @ Ax
                dual_feasible = True
                for j in range(ncols):
                    if ubx[j] - lbx[j] <= piv_tol:
                        continue    # fixed columns can never enter
                    if vs[j] == _AT_LOWER and dw[j] < -1e-7:
                        dual_feasible = False
                        break
                    if vs[j] == _AT_UPPER and dw[j] > 1e-7:
                        dual_feasible = False
                        break
                if dual_feasible:
                    # small budget: a good warm basis repairs in a few
                    # pivots; degenerate stalls fall back to a cold start
                    dstat, itd = _dual_simplex_phase(
                        Ax, b, cw, lbx, ubx, vs, basis, binv, xb,
                        tol, piv_tol, m + 200)
                    iters += itd
                    if dstat == STATUS_OPTIMAL:
                        warm_ok = True
                    elif dstat == STATUS_INFEASIBLE:
                        return (STATUS_INFEASIBLE, np.zeros(ncols),
                                np.zeros(m), vs, iters)
    if not warm_ok:
        # cold start: nonbasic at the bound of smaller magnitude
        for j in range(n):
            vs[j] = _AT_LOWER if abs(lb[j]) <= abs(ub[j]) else _AT_UPPER
        nbval = np.where(vs[:n] == _AT_LOWER, lb, ub)
        r = b - A @ nbval
        c1 = np.zeros(ncols)
        binv = np.eye(m)
        for i in range(m):
            j = n + i
            if r[i] < 0.0:
                Ax[i, j] = -1.0
                binv[i, i] = -1.0
            lbx[j] = 0.0
            ubx[j] = abs(r[i]) + 1.0
            vs[j] = _BASIC
            basis[i] = j
            xb[i] = abs(r[i])
            c1[j] = 1.0
        status, it1 = _simplex_phase(Ax, b, c1, lbx, ubx, vs, basis, binv, xb,
                                     ncols, tol, piv_tol, max_iter, 5 * (m + n))
        iters += it1
        if status == STATUS_ITER_LIMIT or status == STATUS_SINGULAR:
            return status, np.zeros(ncols), np.zeros(m), vs, iters
        obj1 = 0.0
        for i in range(m):
            if basis[i] >= n:
                obj1 += xb[i]
        for j in range(n, ncols):
            if vs[j] == _AT_UPPER:
                obj1 += ubx[j]
        scale = max(1.0, np.abs(b).max()) if m > 0 else 1.0
        if obj1 > 1e-7 * scale:
            return STATUS_INFEASIBLE, np.zeros(ncols), np.zeros(m), vs, iters
    # pin artificials at zero for phase 2
    for j in range(n, ncols):
        ubx[j] = 0.0
    cx = np.zeros(ncols)
    cx[:n] = c
    if _refactor(Ax, b, lbx, ubx, vs, basis, binv, xb) != 0:
        return STATUS_SINGULAR, np.zeros(ncols), np.zeros(m), vs, iters
    status, it2 = _simplex_phase(Ax, b, cx, lbx, ubx, vs, basis, binv, xb,
                                 n, tol, piv_tol, max_iter, 5 * (m + n))
    iters += it2
    if status != STATUS_OPTIMAL:
        return status, np.zeros(ncols), np.zeros(m), vs, iters
    if _refactor(Ax, b, lbx, ubx, vs, basis, binv, xb) != 0:
        return STATUS_SINGULAR, np.zeros(ncols), np.zeros(m), vs, iters
    x = np.where(vs == _AT_LOWER, lbx, 0.0) + np.where(vs == _AT_UPPER, ubx, 0.0)
    for i in range(m):
        x[basis[i]] = xb[i]
    y = cx[basis] @ binv
    return STATUS_OPTIMAL, x, y, vs, iters


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


PURE_NUMPY = _env_flag("METROPLAN_PURE_NUMPY")

refactor_py = _refactor
simplex_phase_py = _simplex_phase
dual_simplex_phase_py = _dual_simplex_phase
solve_core_py = _solve_core

if PURE_NUMPY:
    solve_core = _solve_core
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit

        _refactor = njit(cache=True)(_refactor)
        _simplex_phase = njit(cache=True)(_simplex_phase)
        _dual_simplex_phase = njit(cache=True)(_dual_simplex_phase)
        solve_core = njit(cache=True)(_solve_core)
        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        solve_core = _solve_core
        NUMBA_ENABLED = False


@dataclass
class LpSolution:
    status: str                    # "optimal" | "infeasible" | "numerical"
    x: Optional[np.ndarray]
    objective: Optional[float]
    duals: Optional[np.ndarray]
    vstat: Optional[np.ndarray]    # basis descriptor for warm starts
    iterations: int = 0


_STATUS_NAMES = {
    STATUS_OPTIMAL: "optimal",
    STATUS_INFEASIBLE: "infeasible",
    STATUS_ITER_LIMIT: "numerical",
    STATUS_SINGULAR: "numerical",
}


def solve_lp(A: np.ndarray, b: np.ndarray, c: np.ndarray,
             lb: np.ndarray, ub: np.ndarray,
             warm_vstat: Optional[np.ndarray] = None,
             max_iter: int = 0) -> LpSolution:
    """Solve min c'x s.t. A x = b, lb <= x <= ub (all bounds finite)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    lb = np.ascontiguousarray(lb, dtype=np.float64)
    ub = np.ascontiguousarray(ub, dtype=np.float64)
    m, n = A.shape
    # equilibrate rows and columns: big-M rows next to small-coefficient
    # rows otherwise drive the factorized basis singular on larger
    # instances; the solve runs on the scaled problem and the solution is
    # mapped back below
    row_norm = np.abs(A).max(axis=1, initial=0.0)
    row_norm[row_norm == 0.0] = 1.0
    A = A / row_norm[:, None]
    b = b / row_norm
    col_norm = np.abs(A).max(axis=0, initial=0.0)
    col_norm[col_norm == 0.0] = 1.0
    A = np.ascontiguousarray(A / col_norm[None, :])
    c_orig = c
    c = c / col_norm
    lb = lb * col_norm
    ub = ub * col_norm
    if max_iter <= 0:
        max_iter = 20000 + 50 * (m + n)
    if warm_vstat is not None and len(warm_vstat) >= n:
        vstat = np.ascontiguousarray(warm_vstat, dtype=np.int64)
        use_warm = True
    else:
        vstat = np.zeros(n, dtype=np.int64)
        use_warm = False
    status, x, y, vs, iters = solve_core(A, b, c, lb, ub, vstat, use_warm,
                                         max_iter, 1e-7, 1e-9)
    name = _STATUS_NAMES[status]
    if status != STATUS_OPTIMAL:
        return LpSolution(status=name, x=None, objective=None, duals=None,
                          vstat=None, iterations=iters)
    xs = x[:n] / col_norm
    return LpSolution(status="optimal", x=xs, objective=float(c_orig @ xs),
                      duals=y / row_norm, vstat=vs.copy(), iterations=iters)
