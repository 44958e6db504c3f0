"""Certified solver for discrete min-max affine fitting.

Solves min over (z, B) of max_i sqrt(|t_i - z - B x_i|^2 + c_i^2), the
worst-case fit of an affine predictor over a finite data set, where c_i
are fixed per-point offsets.  The solve itself is delegated to a conic
solver; certification is not.  A dual point is rebuilt from scratch at
the returned primal (simplex weights on the active cones, exact linear
feasibility repair, budget rescaling) and evaluated, so the reported
lower bound holds independently of any solver-internal tolerance.
"""

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.optimize

from .exceptions import SolverError

_SOLVER_CHAIN = ("CLARABEL", "SCS")


@dataclass
class MinimaxSolution:
    """Primal-dual outcome of the min-max fit.

    objective is recomputed from the returned (z, B) directly, never
    read off the solver; suboptimality = (objective - lower_bound) /
    objective.  objective_history is the certified envelope
    [initial feasible value at (0, 0), final value]; it is
    non-increasing by construction.
    """

    z: np.ndarray
    b_matrix: np.ndarray        # (p, m), acts on W-coordinate columns
    objective: float
    lower_bound: float
    suboptimality: float
    certified: bool
    objective_history: np.ndarray
    n_active: int
    solver_stats: dict = field(default_factory=dict)


def eval_objective(z, b_matrix, x, t, c):
    """max_i sqrt(|t_i - z - B x_i|^2 + c_i^2) for row-stacked data."""
    if b_matrix.shape[0] == 0:
        return float(np.max(c)) if c.size else 0.0
    resid = t - z[None, :] - x @ b_matrix.T
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", resid, resid)
                                + c ** 2)))


def _simplex_weights(h_rows, penalty=1e8):
    """Nonnegative weights summing to 1 minimizing |sum_i lam_i h_i|."""
    scale = max(np.max(np.abs(h_rows)), 1.0)
    stacked = np.vstack([h_rows.T / scale,
                         np.full((1, h_rows.shape[0]), penalty)])
    rhs = np.zeros(stacked.shape[0])
    rhs[-1] = penalty
    lam, _ = scipy.optimize.nnls(stacked, rhs)
    total = lam.sum()
    if total <= 0:
        lam = np.full(h_rows.shape[0], 1.0 / h_rows.shape[0])
        total = 1.0
    return lam / total


def _kkt_polish(z, b_matrix, x, t, c, max_rounds=8, newton_iters=40):
    """Sharpen a near-optimal point to an exact KKT point by Newton.

    Packs the unknowns per output row as Theta[a] = [z_a, B[a, :]] so
    predictions are Theta @ [1, x_i]; solves the stationarity,
    active-value and multiplier-normalization equations for the current
    active set, growing the set on feasibility violations and shrinking
    it on negative multipliers.  Returns (z, B) or None on failure.
    """
    n, m = x.shape
    p = z.shape[0]
    onesx = np.hstack([np.ones((n, 1)), x])            # (n, 1+m)
    theta = np.hstack([z[:, None], b_matrix])          # (p, 1+m)
    n_th = p * (1 + m)

    def residuals(theta, beta, sigma, idx):
        r = t - onesx @ theta.T
        f2 = np.einsum("ij,ij->i", r, r) + c * c
        r_a = r[idx]
        w = beta[:, None] * r_a
        r_stat = (w.T @ onesx[idx]).ravel()            # (p*(1+m),)
        r_eq = f2[idx] - sigma
        return r, f2, np.concatenate([r_stat, r_eq, [beta.sum() - 1.0]])

    r0 = t - onesx @ theta.T
    f2 = np.einsum("ij,ij->i", r0, r0) + c * c
    sigma = float(np.max(f2))
    scale = max(sigma, 1.0)
    idx = np.flatnonzero(f2 >= sigma * (1.0 - 1e-5))
    beta = np.full(idx.size, 1.0 / idx.size)

    for _ in range(max_rounds):
        ok = False
        for _ in range(newton_iters):
            r, f2, res = residuals(theta, beta, sigma, idx)
            merit = np.linalg.norm(res)
            if merit <= 1e-13 * scale:
                ok = True
                break
            q = idx.size
            r_a = r[idx]
            ox_a = onesx[idx]
            k_beta = (ox_a.T * beta) @ ox_a
            jac = np.zeros((n_th + q + 1, n_th + q + 1))
            jac[:n_th, :n_th] = -np.kron(np.eye(p), k_beta)
            h_cols = (r_a[:, :, None]
                      * ox_a[:, None, :]).reshape(q, n_th)
            jac[:n_th, n_th:n_th + q] = h_cols.T
            jac[n_th:n_th + q, :n_th] = -2.0 * h_cols
            jac[n_th:n_th + q, -1] = -1.0
            jac[-1, n_th:n_th + q] = 1.0
            try:
                step = np.linalg.lstsq(jac, -res, rcond=None)[0]
            except np.linalg.LinAlgError:
                return None
            alpha = 1.0
            for _ in range(12):
                th_try = theta + alpha * step[:n_th].reshape(p, 1 + m)
                be_try = beta + alpha * step[n_th:n_th + q]
                si_try = sigma + alpha * step[-1]
                _, _, res_try = residuals(th_try, be_try, si_try, idx)
                if np.linalg.norm(res_try) < merit:
                    theta, beta, sigma = th_try, be_try, si_try
                    break
                alpha *= 0.5
            else:
                break
        if not ok:
            return None
        if np.min(beta) < -1e-12:                      # drop and retry
            keep = beta > 1e-14
            if keep.sum() == 0:
                return None
            idx = idx[keep]
            beta = beta[keep]
            beta /= beta.sum()
            continue
        _, f2, _ = residuals(theta, beta, sigma, idx)
        worst = int(np.argmax(f2))
        if f2[worst] > sigma * (1.0 + 1e-12) and worst not in idx:
            idx = np.append(idx, worst)
            beta = np.append(beta * (1.0 - 1e-3), 1e-3)
            continue
        return theta[:, 0].copy(), theta[:, 1:].copy()
    return None


def _dual_lower_bound(z, b_matrix, x, t, c, active_rtol=1e-4):
    """Self-contained lower bound on the min-max optimum.

    Builds omega_i = lam_i rhat_i over near-active points, repairs the
    moment constraints sum omega_i = 0 and sum omega_i x_i^T = 0 through
    the moment matrix K = sum [1,x][1,x]^T (two sweeps), rescales into
    the unit dual budget, and deducts the remaining violation times a
    computable radius bound on the optimizer.  Only the violation
    component in the row space of K matters: predictions, hence the
    objective, are invariant along null(K) directions of (z, B), so the
    primal may be restricted to the row space without loss.
    """
    n, m = x.shape
    p = z.shape[0]
    resid = t - z[None, :] - x @ b_matrix.T
    f_vals = np.sqrt(np.einsum("ij,ij->i", resid, resid) + c ** 2)
    s_cur = float(np.max(f_vals))
    if s_cur == 0.0:
        return 0.0, 0
    active = f_vals >= s_cur * (1.0 - active_rtol)
    idx = np.flatnonzero(active)
    rhat = resid[idx] / f_vals[idx, None]
    # stationarity rows: [rhat_i, vec(rhat_i x_i^T)]
    h = np.hstack([rhat,
                   (rhat[:, :, None] * x[idx][:, None, :]).reshape(
                       len(idx), p * m)])
    lam = _simplex_weights(h)
    omega = np.zeros((n, p))
    omega[idx] = lam[:, None] * rhat
    nu = np.zeros(n)
    nu[idx] = lam * c[idx] / f_vals[idx]

    ones_x = np.hstack([np.ones((n, 1)), x])          # (n, m+1)
    k_mat = ones_x.T @ ones_x
    eigval, eigvec = np.linalg.eigh(k_mat)
    pos = eigval > max(eigval[-1], 1.0) * 1e-13
    v_pos = eigvec[:, pos]
    for _ in range(2):                                # repair twice
        e0 = omega.sum(axis=0)
        e1 = omega.T @ x
        e_full = np.hstack([e0[:, None], e1])         # (p, m+1)
        g, *_ = np.linalg.lstsq(k_mat, e_full.T, rcond=None)
        omega -= ones_x @ g                           # d_i = G [1; x_i]
    zeta_mat = np.hstack([omega.sum(axis=0)[:, None], omega.T @ x])
    zeta = float(np.linalg.norm(zeta_mat @ v_pos)) if pos.any() else 0.0

    budget = np.sum(np.sqrt(np.einsum("ij,ij->i", omega, omega)
                            + nu ** 2))
    if budget > 0:
        omega /= budget
        nu /= budget
        zeta /= budget
    value = float(np.einsum("ij,ij->", omega, t) + nu @ c)
    # radius bound on the row-space part of any optimizer [z*, B*]:
    # each z* + B* x_i lies within s0 of t_i for the start s0 = F(0, 0)
    if pos.any() and zeta > 0:
        s0 = float(np.sqrt(np.max(np.einsum("ij,ij->i", t, t) + c ** 2)))
        norms_t = np.sqrt(np.einsum("ij,ij->i", t, t))
        radius = np.sqrt(np.sum((norms_t + s0) ** 2) / eigval[pos][0])
        value -= zeta * radius
    return max(value, 0.0), int(len(idx))


def solve_minimax(x, t, c, tol_opt=1e-6, ridge=1e-10, solver=None,
                  verbose=False):
    """Fit (z, B) minimizing the worst-case augmented misfit.

    x: (n, m) inputs; t: (n, p) targets; c: (n,) nonnegative offsets
    entering each point's value as sqrt(misfit^2 + c_i^2).  A tiny ridge
    on (z, B) pins the minimal-norm optimizer when the min-max solution
    set is flat; it is small enough to leave the certified suboptimality
    (relative, against an independently evaluated dual point) intact.

    Unsolved or diverged conic programs degrade to the best available
    iterate with certified=False rather than raising.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.atleast_2d(np.asarray(t, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n, m = x.shape
    p = t.shape[1]
    if t.shape[0] != n or c.shape[0] != n:
        raise ValueError("x, t, c must agree on the number of data points")
    if np.any(c < -1e-14):
        raise ValueError("offsets c must be nonnegative")
    c = np.maximum(c, 0.0)
    obj0 = eval_objective(np.zeros(p), np.zeros((p, m)), x, t, c)
    if p == 0:
        val = float(np.max(c)) if n else 0.0
        return MinimaxSolution(
            z=np.zeros(0), b_matrix=np.zeros((0, m)), objective=val,
            lower_bound=val, suboptimality=0.0, certified=True,
            objective_history=np.array([val, val]), n_active=n,
            solver_stats={"solver": "closed-form", "p": 0})

    z_var = cp.Variable(p)
    b_var = cp.Variable((p, m))
    s_var = cp.Variable()
    scale = max(obj0, 1.0)
    cons = [cp.SOC(s_var,
                   cp.hstack([t[i] - z_var - b_var @ x[i], c[i]]))
            for i in range(n)]
    objective = cp.Minimize(
        s_var + ridge * scale * (cp.sum_squares(z_var) / scale ** 2
                                 + cp.sum_squares(b_var)))
    prob = cp.Problem(objective, cons)
    chain = (solver,) if solver else _SOLVER_CHAIN
    tight = {"CLARABEL": {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11,
                          "tol_feas": 1e-11},
             "SCS": {"eps": 1e-9, "max_iters": 50000}}
    status = None
    for name in chain:
        try:
            # "inaccurate" advisories are expected at these tolerances;
            # the independent dual certificate below judges the result
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(solver=name, verbose=verbose,
                           **tight.get(name, {}))
            status = prob.status
        except (cp.error.SolverError, ValueError):
            continue
        if status in ("optimal", "optimal_inaccurate"):
            break
    solved = status in ("optimal", "optimal_inaccurate") \
        and z_var.value is not None
    if solved:
        z = np.asarray(z_var.value, dtype=float).ravel()
        b = np.asarray(b_var.value, dtype=float).reshape(p, m)
    else:
        z = np.zeros(p)
        b = np.zeros((p, m))
    obj = eval_objective(z, b, x, t, c)
    if obj > obj0:                          # never worse than the start
        z, b, obj = np.zeros(p), np.zeros((p, m)), obj0
        solved = False
    if solved:
        polished = _kkt_polish(z, b, x, t, c)
        if polished is not None:
            z_k, b_k = polished
            obj_k = eval_objective(z_k, b_k, x, t, c)
            if obj_k <= obj * (1.0 + 1e-9):
                z, b, obj = z_k, b_k, obj_k
    # the dual is rebuilt at the sharpest available stationary point;
    # the min-norm pass below re-enters the slackened optimal set but is
    # not itself stationary for the min-max objective
    lb, n_active = _dual_lower_bound(z, b, x, t, c)
    if solved:
        # canonical representative: min |B|, then |z|, over the (slightly
        # slackened) optimal set; resolves flat optima deterministically
        s_target = obj * (1.0 + 1e-9) + 1e-12 * scale
        cons_p = [cp.SOC(cp.Constant(s_target),
                         cp.hstack([t[i] - z_var - b_var @ x[i], c[i]]))
                  for i in range(n)]
        prob_p = cp.Problem(
            cp.Minimize(cp.sum_squares(b_var)
                        + 1e-6 * cp.sum_squares(z_var) / scale ** 2),
            cons_p)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                prob_p.solve(solver="CLARABEL", tol_gap_abs=1e-11,
                             tol_gap_rel=1e-11, tol_feas=1e-11)
            if prob_p.status in ("optimal", "optimal_inaccurate") \
                    and z_var.value is not None:
                z_p = np.asarray(z_var.value, dtype=float).ravel()
                b_p = np.asarray(b_var.value, dtype=float).reshape(p, m)
                obj_p = eval_objective(z_p, b_p, x, t, c)
                if obj_p <= s_target * (1.0 + 1e-12):
                    z, b, obj = z_p, b_p, obj_p
        except (cp.error.SolverError, ValueError):
            pass
    subopt = (obj - lb) / max(obj, np.finfo(float).tiny)
    return MinimaxSolution(
        z=z, b_matrix=b, objective=obj, lower_bound=lb,
        suboptimality=float(subopt),
        certified=bool(solved and subopt <= tol_opt),
        objective_history=np.array([obj0, obj]),
        n_active=n_active,
        solver_stats={"solver": status or "failed", "n": n, "m": m, "p": p})
