"""Box-constrained convex quadratic programming with a KKT certificate.

Minimizes q(y) = y' A y + 2 b' y over the box [lo, hi]^d for symmetric
positive semidefinite A.  An accelerated projected-gradient loop with
restarts drives the iterate near the face set; an exact active-set
polish then solves the free subsystem directly and verifies the KKT
sign conditions, so the returned point carries a projected-gradient
residual at the requested tolerance rather than a heuristic one.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BoxQPResult:
    """Solution record of one box-QP solve.

    pg_residual is the infinity norm of y - clip(y - grad q(y)); it
    vanishes exactly at KKT points of the box problem.  History stores
    the best objective value seen up to each recorded iteration, hence
    is non-increasing.
    """

    y: np.ndarray
    objective: float
    pg_residual: float
    iterations: int
    converged: bool
    active_lower: np.ndarray
    active_upper: np.ndarray
    objective_history: np.ndarray = field(default=None)


def _grad(a_mat, b, y):
    return 2.0 * (a_mat @ y + b)


def _objective(a_mat, b, y):
    return float(y @ a_mat @ y + 2.0 * b @ y)


def _pg_residual(a_mat, b, y, lo, hi):
    step = np.clip(y - _grad(a_mat, b, y), lo, hi)
    return float(np.max(np.abs(y - step))) if y.size else 0.0


def _solve_face(a_mat, b, fixed_mask, fixed_vals, lo, hi):
    """Minimize on a face, re-fixing coordinates the solve pushes out of
    the box until the free part is interior (at most d inner rounds)."""
    d = b.size
    y = fixed_vals.copy()
    fixed = fixed_mask.copy()
    for _ in range(d + 1):
        free = ~fixed
        if not free.any():
            break
        rhs = -(b[free] + a_mat[np.ix_(free, fixed)] @ y[fixed])
        block = a_mat[np.ix_(free, free)]
        try:
            sol = np.linalg.solve(block, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(block, rhs, rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            sol = np.linalg.lstsq(block, rhs, rcond=None)[0]
        clipped = np.clip(sol, lo, hi)
        y[free] = clipped
        newly = free.copy()
        newly[free] = (sol < lo) | (sol > hi)
        if not newly.any():
            break
        fixed |= newly
    return y


def _polish(a_mat, b, y, lo, hi, tol, rounds=None):
    """Exact solve on the guessed active face, re-guessing on KKT sign
    violations.  Singular free blocks fall back to the min-norm least
    squares solution, still certified afterwards by the pg residual."""
    d = y.size
    rounds = rounds if rounds is not None else 2 * d + 6
    for _ in range(rounds):
        g = _grad(a_mat, b, y)
        low = (y <= lo + 1e-10) & (g > 0)
        upp = (y >= hi - 1e-10) & (g < 0)
        fixed_vals = np.clip(y, lo, hi)
        fixed_vals[low] = lo
        fixed_vals[upp] = hi
        y_new = _solve_face(a_mat, b, low | upp, fixed_vals, lo, hi)
        if _objective(a_mat, b, y_new) <= _objective(a_mat, b, y) + 1e-15:
            y = y_new
        else:                      # fall back to one safeguarded pg step
            y = np.clip(y - g / max(4.0 * np.abs(np.diag(a_mat)).max(),
                                    1e-30), lo, hi)
        if _pg_residual(a_mat, b, y, lo, hi) <= tol:
            break
    return y


def solve_box_qp(a_mat, b, lo=-1.0, hi=1.0, tol=1e-8, max_iter=2000,
                 record_history=True):
    """Certified minimizer of y' A y + 2 b' y over the box.

    A must be symmetric PSD (the caller's quadratic may be singular;
    minimizers are then non-unique and any KKT point is returned).
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    d = b.size
    if d == 0:
        return BoxQPResult(y=np.zeros(0), objective=0.0, pg_residual=0.0,
                           iterations=0, converged=True,
                           active_lower=np.zeros(0, bool),
                           active_upper=np.zeros(0, bool),
                           objective_history=np.zeros(0))
    a_mat = 0.5 * (a_mat + a_mat.T)
    lam_max = float(np.linalg.eigvalsh(a_mat)[-1])
    lip = max(2.0 * lam_max, 1e-30)
    y = np.clip(-b / np.maximum(np.diag(a_mat), 1e-30), lo, hi)
    v = y.copy()
    theta = 1.0
    best = y.copy()
    best_obj = _objective(a_mat, b, y)
    history = [best_obj]
    it = 0
    for it in range(1, max_iter + 1):
        y_prev = y
        y = np.clip(v - _grad(a_mat, b, v) / lip, lo, hi)
        obj = _objective(a_mat, b, y)
        if obj < best_obj:
            best_obj = obj
            best = y.copy()
        if record_history:
            history.append(best_obj)
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        v = y + ((theta - 1.0) / theta_new) * (y - y_prev)
        theta = theta_new
        if (y - y_prev) @ _grad(a_mat, b, y) > 0:     # restart on ascent
            v = y.copy()
            theta = 1.0
        if it % 25 == 0 and _pg_residual(a_mat, b, best, lo, hi) <= 10 * tol:
            break
    y = best
    for _ in range(4):             # alternate polish and short pg bursts
        y = _polish(a_mat, b, y, lo, hi, tol)
        if _pg_residual(a_mat, b, y, lo, hi) <= tol:
            break
        for _ in range(50):
            y = np.clip(y - _grad(a_mat, b, y) / lip, lo, hi)
    obj = _objective(a_mat, b, y)
    if obj < best_obj:
        best_obj = obj
    if record_history:
        history.append(min(best_obj, obj))
    res = _pg_residual(a_mat, b, y, lo, hi)
    g = _grad(a_mat, b, y)
    return BoxQPResult(
        y=y, objective=obj, pg_residual=res, iterations=it,
        converged=bool(res <= tol),
        active_lower=(y <= lo + 1e-12) & (g >= -tol),
        active_upper=(y >= hi - 1e-12) & (g <= tol),
        objective_history=np.asarray(history) if record_history else None)
