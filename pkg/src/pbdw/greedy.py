"""Weak-greedy reduced basis generation driven by a residual surrogate.

The surrogate for the distance of u(y) to the current space is the dual
norm of the residual of the Galerkin projection; by the error-residual
envelope it is equivalent to the true projection error with constants
(r, R), so the exact argmax over the training set realizes a weak greedy
step with gamma = r/R at the true-distance level (gamma = 1 at surrogate
level).  Reduced systems are assembled from parameter-independent blocks.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import ConfigError, UnstableRecoveryError
from .onespace import OneSpaceEstimator, ReducedSpace, beta_mu
from .validation import as_float_array

_SWEEP_CHUNK = 2048


@dataclass
class TrainingSet:
    """Finite parameter training set.

    ``snapshots`` caches solved states as columns (dim, P), filled lazily.
    """

    points: np.ndarray
    mode: str
    meta: dict = field(default_factory=dict)
    snapshots: np.ndarray = None

    def __post_init__(self):
        self.points = np.atleast_2d(as_float_array(self.points, name="points"))
        if self.points.shape[0] == 0:
            raise ConfigError("training set is empty", key_path="training")
        if np.unique(self.points, axis=0).shape[0] != self.points.shape[0]:
            raise ConfigError("training set contains duplicate points",
                              key_path="training")

    @property
    def size(self):
        return self.points.shape[0]

    def ensure_snapshots(self, model):
        if self.snapshots is None:
            self.snapshots = model.solve_many(self.points)
        return self.snapshots


def tensor_grid_training(d_y, k):
    """Tensor-product grid of k equispaced values per direction."""
    if k < 2:
        raise ConfigError("tensor grid needs k >= 2 per direction",
                          key_path="training.k")
    axes = [np.linspace(-1.0, 1.0, k)] * d_y
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    return TrainingSet(points=points, mode="tensor_grid", meta={"k": k})


def sparse_random_training(d_y, n, seed=0):
    """n i.i.d. uniform points in the parameter box."""
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(n, d_y))
    return TrainingSet(points=points, mode="sparse_random",
                       meta={"n": n, "seed": seed})


def random_training(d_y, eps, eta, c_n=10.0, seed=0):
    """Randomized training of size N = ceil(c_n (|ln eta| + |ln eps|)).

    With this size, a greedy run over the random set reaches accuracy
    eps on the manifold with probability at least 1 - eta (constants
    configurable; the scaling, not a universal constant, is the contract).
    """
    if not (0 < eps < 1) or not (0 < eta < 1):
        raise ConfigError("random_training expects eps, eta in (0, 1)",
                          key_path="training")
    n = math.ceil(c_n * (abs(math.log(eta)) + abs(math.log(eps))))
    ts = sparse_random_training(d_y, n, seed=seed)
    ts.meta.update({"eps": eps, "eta": eta, "c_n": c_n})
    return ts


def stopping_threshold(model, eps_target, c=None, a=0.0):
    """Surrogate-level stopping threshold c * eps^(1+a); the default
    c = r makes the certified eps of the returned space <= eps_target."""
    r, _ = model.bounds
    return (r if c is None else c) * eps_target ** (1.0 + a)


class ReducedGalerkin:
    """Precomputed reduced blocks of one basis (optionally anchored).

    Reduced operators and loads are parameter-independent; assembling the
    n x n system per parameter is a weighted sum of the blocks.  The
    surrogate value is the dual norm of the full-order residual of the
    Galerkin state anchor + basis @ c(y).
    """

    def __init__(self, model, basis, anchor=None):
        self.model = model
        self.basis = np.asarray(basis, dtype=float)
        self.anchor = anchor
        n = self.basis.shape[1]
        d = model.d_y
        ops_basis = [op.dot(self.basis) for op in model.ops]   # A_j Phi
        self.red_ops = np.stack([self.basis.T @ ob for ob in ops_basis]) \
            if n else np.zeros((d + 1, 0, 0))
        f_comps = [model.load.copy()] + [np.zeros(model.space.dim)
                                         for _ in range(d)]
        if anchor is not None:
            f_comps[0] = model.load - model.ops[0].dot(anchor)
            for j in range(d):
                f_comps[j + 1] = -model.ops[j + 1].dot(anchor)
        self.f_comps = np.stack(f_comps)                       # (d+1, dim)
        self.rhs_comps = self.f_comps @ self.basis             # (d+1, n)
        self.ops_basis = np.stack(ops_basis) if n \
            else np.zeros((d + 1, model.space.dim, 0))

    def _extended(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.hstack([np.ones((Y.shape[0], 1)), Y])

    def solve_coeffs(self, Y):
        """Reduced Galerkin coefficients for each parameter row."""
        yext = self._extended(Y)
        n = self.basis.shape[1]
        if n == 0:
            return np.zeros((yext.shape[0], 0))
        A = np.tensordot(yext, self.red_ops, axes=([1], [0]))
        rhs = yext @ self.rhs_comps
        return np.linalg.solve(A, rhs[..., None])[..., 0]

    def galerkin_state(self, y):
        c = self.solve_coeffs(np.atleast_2d(y))[0]
        state = self.basis @ c
        if self.anchor is not None:
            state = state + self.anchor
        return state

    def residuals(self, Y):
        """Full-order residual dual vectors of the Galerkin states, (P, dim)."""
        yext = self._extended(Y)
        C = self.solve_coeffs(Y)
        R = yext @ self.f_comps
        for j in range(yext.shape[1]):
            if self.basis.shape[1]:
                R -= yext[:, j:j + 1] * (C @ self.ops_basis[j].T)
        return R

    def surrogate(self, Y):
        """Residual dual norms of the Galerkin projections, shape (P,)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty(Y.shape[0])
        for lo in range(0, Y.shape[0], _SWEEP_CHUNK):
            chunk = slice(lo, min(lo + _SWEEP_CHUNK, Y.shape[0]))
            out[chunk] = self.model.space.dual_norms(self.residuals(Y[chunk]))
        return out


def surrogate(model, reduced, y):
    """Distance surrogate R(y, U_n): residual dual norm of the Galerkin
    projection onto ``reduced`` (anchor-aware)."""
    basis = reduced.basis if isinstance(reduced, ReducedSpace) else reduced
    anchor = reduced.anchor if isinstance(reduced, ReducedSpace) else None
    rg = ReducedGalerkin(model, basis, anchor=anchor)
    return float(rg.surrogate(np.atleast_2d(y))[0])


@dataclass
class GreedyTrace:
    """Step-by-step record of one greedy run.

    ``surrogate_max_history[k]`` is the training maximum of the surrogate
    with k basis vectors; length n+1.  ``eps_history`` divides it by r.
    gamma_used is 1: the argmax over the training set is exact.
    """

    selected_indices: list
    selected_params: np.ndarray
    surrogate_max_history: np.ndarray
    eps_history: np.ndarray
    dist_history: np.ndarray = None
    gamma_used: float = 1.0
    deflated: list = field(default_factory=list)


def weak_greedy(model, training, n_max, tol=0.0, dist_history=False,
                anchor=None, drop_tol=1e-10, m_budget=None):
    """Greedy basis over a training set, exact argmax of the surrogate.

    Stops at ``n_max`` vectors or when the training maximum of the
    surrogate falls to ``tol``.  Snapshots whose component orthogonal to
    the current basis deflates below ``drop_tol`` are skipped and their
    training points retired (recorded in the trace).  Pass ``m_budget``
    to refuse n_max beyond the sensor budget.

    Returns (ReducedSpace, GreedyTrace); the space's eps is the certified
    over-the-training-set bound (final max surrogate) / r.
    """
    if m_budget is not None and n_max > m_budget:
        raise ConfigError(
            f"n_max = {n_max} exceeds the measurement budget m = {m_budget}",
            key_path="greedy.n_max")
    if n_max < 0:
        raise ConfigError("n_max must be >= 0", key_path="greedy.n_max")
    r, _ = model.bounds
    points = training.points
    active = np.ones(points.shape[0], dtype=bool)
    basis = np.zeros((model.space.dim, 0))
    sel_idx, sel_params, history, dists, deflated = [], [], [], [], []
    if dist_history:
        snaps = training.ensure_snapshots(model)
    while True:
        rg = ReducedGalerkin(model, basis, anchor=anchor)
        vals = rg.surrogate(points)
        history.append(float(np.max(vals[active])) if active.any() else 0.0)
        if dist_history:
            shifted = snaps - anchor[:, None] if anchor is not None else snaps
            proj = shifted - basis @ (basis.T @ model.space.gram.dot(shifted))
            errs = np.sqrt(np.maximum(
                np.einsum("ij,ij->j", proj, model.space.gram.dot(proj)), 0.0))
            dists.append(float(np.max(errs)))
        if basis.shape[1] >= n_max or history[-1] <= tol or not active.any():
            break
        order = np.argsort(-vals, kind="stable")   # ties -> lowest index
        added = False
        for idx in order:
            if not active[idx]:
                continue
            if training.snapshots is not None:
                snap = training.snapshots[:, idx]
            else:
                snap = model.solve(points[idx])
            vec = snap - anchor if anchor is not None else snap
            new_cols, dropped = model.space.orthonormalize(
                vec[:, None], against=basis, drop_tol=drop_tol,
                on_drop="skip")
            if dropped:
                active[idx] = False
                deflated.append(int(idx))
                continue
            basis = np.column_stack([basis, new_cols])
            sel_idx.append(int(idx))
            sel_params.append(points[idx])
            active[idx] = False
            added = True
            break
        if not added:
            break
    hist = np.asarray(history)
    trace = GreedyTrace(
        selected_indices=sel_idx,
        selected_params=(np.vstack(sel_params) if sel_params
                         else np.zeros((0, model.d_y))),
        surrogate_max_history=hist,
        eps_history=hist / r,
        dist_history=np.asarray(dists) if dist_history else None,
        deflated=deflated)
    space = ReducedSpace(
        basis=basis, anchor=anchor, eps=float(hist[-1] / r),
        provenance={"builder": "weak_greedy", "training_mode": training.mode,
                    "training_size": training.size, "n_max": n_max,
                    "tol": tol})
    return space, trace


def greedy_hierarchy(model, space, trace, n_values=None):
    """Nested prefixes of a greedy space, each with its certified eps."""
    if n_values is None:
        n_values = range(1, space.n + 1)
    return [space.prefix(n, eps=float(trace.eps_history[n]))
            for n in n_values]


@dataclass
class PoorMansResult:
    """Outcome of the certificate-product model selection."""

    n_star: int
    map: OneSpaceEstimator
    rows: list          # per-space dicts: n, beta, mu, eps, product


def poor_mans_select(model, system, spaces):
    """Pick the space minimizing mu(U_n, W) * eps_n over a hierarchy.

    Spaces with unstable recovery (infinite mu) are skipped; ties go to
    the smallest n.  Raises UnstableRecoveryError when nothing is stable.
    """
    rows = []
    best = None
    for sp in spaces:
        beta, mu = beta_mu(sp, system)
        product = mu * sp.eps if np.isfinite(mu) else float("inf")
        rows.append({"n": sp.n, "beta": beta, "mu": mu, "eps": sp.eps,
                     "product": product})
        if np.isfinite(product) and (best is None or product < best[0]):
            best = (product, sp)
    if best is None:
        raise UnstableRecoveryError(
            "every candidate space has an unstable recovery map (mu = inf)")
    chosen = best[1]
    est = OneSpaceEstimator().fit(chosen, system)
    est.certify()
    return PoorMansResult(n_star=chosen.n, map=est, rows=rows)


class GreedyReducedBasis(BaseEstimator):
    """Estimator wrapper around :func:`weak_greedy`.

    Parameters mirror the function; fit(model, training) stores the
    resulting space and trace as ``space_`` and ``trace_``.
    """

    def __init__(self, n_max=10, tol=0.0, dist_history=False,
                 drop_tol=1e-10, m_budget=None):
        self.n_max = n_max
        self.tol = tol
        self.dist_history = dist_history
        self.drop_tol = drop_tol
        self.m_budget = m_budget

    def fit(self, model, training, anchor=None):
        self.space_, self.trace_ = weak_greedy(
            model, training, self.n_max, tol=self.tol,
            dist_history=self.dist_history, anchor=anchor,
            drop_tol=self.drop_tol, m_budget=self.m_budget)
        self.model_ = model
        return self

    def hierarchy(self, n_values=None):
        if not hasattr(self, "space_"):
            raise NotFittedError("call fit(model, training) first")
        return greedy_hierarchy(self.model_, self.space_, self.trace_,
                                n_values)
