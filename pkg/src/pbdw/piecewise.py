"""Piecewise-affine reduced models over a greedy parameter partition.

The parameter box is split recursively until every cell carries an
affine local space (anchor at the cell-center solution plus a local
greedy basis) whose recovery certificate mu * eps_k meets the global
target.  Recovery evaluates every cell's local map on the data and
keeps the candidate with the smallest metric-projection surrogate.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .greedy import ReducedGalerkin, TrainingSet, weak_greedy
from .inverse import LsConfig, metric_project
from .onespace import OneSpaceEstimator, beta_mu
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError


@dataclass
class PartitionBudget:
    """Resource caps for partition construction.

    max_cells caps the number of leaves; n_max the per-cell basis size
    (defaults to the sensor count); tensor_k the per-direction training
    grid for low parameter dimension; training_points the per-cell
    random training size otherwise.
    """

    max_cells: int = 64
    n_max: int = None
    tensor_k: int = 5
    training_points: int = 120


@dataclass
class Cell:
    """One leaf of the parameter partition."""

    box: np.ndarray                 # (d_y, 2) lower/upper per direction
    path: tuple                     # child steps 2*coord+side from root
    local_space: object             # affine ReducedSpace (anchored)
    local_map: OneSpaceEstimator
    n_k: int
    eps_k: float
    mu_k: float
    certificate: float              # mu_k * eps_k
    certified: bool

    @property
    def volume(self):
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    def contains(self, y, tol=1e-12):
        y = np.asarray(y, dtype=float)
        return bool(np.all(y >= self.box[:, 0] - tol)
                    and np.all(y <= self.box[:, 1] + tol))


@dataclass
class PartitionedModel:
    """Certified piecewise-affine reduced model."""

    model: object
    system: object
    cells: list
    target_eps: float
    split_trace: list
    seed: int
    certified: bool
    surrogate_cfg: LsConfig = field(default_factory=LsConfig)

    @property
    def worst_certificate(self):
        return max(c.certificate for c in self.cells)

    @property
    def size(self):
        return len(self.cells)


@dataclass
class PwRecovery:
    """Outcome of one piecewise recovery."""

    u_star: np.ndarray
    k_star: int
    s_values: np.ndarray
    diagnostics: list               # per cell: (k, s_value, certificate)


def _cell_training(model, box, path, seed, budget):
    d = model.d_y
    lo, hi = box[:, 0], box[:, 1]
    if d <= 3:
        axes = [np.linspace(lo[j], hi[j], budget.tensor_k)
                for j in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        mode = "cell_tensor"
    else:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
        rng = np.random.default_rng(ss)
        pts = lo + (hi - lo) * rng.uniform(size=(budget.training_points, d))
        mode = "cell_random"
    return TrainingSet(points=pts, mode=mode,
                       meta={"path": list(path), "seed": seed})


def _split_coordinate(model, anchor, training, box, depth, rule):
    """Halving coordinate: largest reduction of the anchored-residual
    variance over the cell training set ("variance"), or cyclic."""
    d = model.d_y
    if rule == "round_robin":
        return depth % d
    rg0 = ReducedGalerkin(model, np.zeros((model.space.dim, 0)),
                          anchor=anchor)
    vals = rg0.surrogate(training.points)
    total = float(np.var(vals))
    best_j, best_red = 0, -1.0
    mid = 0.5 * (box[:, 0] + box[:, 1])
    for j in range(d):
        left = training.points[:, j] <= mid[j]
        n_l, n_r = int(left.sum()), int((~left).sum())
        if n_l == 0 or n_r == 0:
            red = 0.0
        else:
            within = (n_l * np.var(vals[left])
                      + n_r * np.var(vals[~left])) / vals.size
            red = total - within
        if red > best_red + 1e-15:
            best_j, best_red = j, red
    return best_j


def build_partition(model, system, eps, budget=None, seed=0,
                    split_rule="variance", drop_tol=1e-10):
    """Greedy parameter-domain splitting with certified local models.

    Each cell runs a local greedy on anchor-shifted snapshots and
    accepts the first basis size n_k (starting at 0: anchor only,
    mu = 1) whose certificate mu(U_k, W) * eps_k falls to the target.
    Cells that cannot be certified are split at the midpoint of the
    chosen coordinate; when max_cells would be exceeded the cell is
    kept with its best available map, flagged, and the model reports
    certified=False with the worst certificate.
    """
    if eps <= 0:
        raise ConfigError("target eps must be positive",
                          key_path="piecewise.eps")
    if split_rule not in ("variance", "round_robin"):
        raise ConfigError(f"unknown split rule {split_rule!r}",
                          key_path="piecewise.split_rule")
    budget = budget or PartitionBudget()
    # n_max=0 is a real request (anchors only), so test against None
    n_cap = system.m if budget.n_max is None else min(system.m, budget.n_max)
    root = np.column_stack([-np.ones(model.d_y), np.ones(model.d_y)])
    queue = [(root, ())]
    cells, split_trace = [], []
    while queue:
        box, path = queue.pop(0)
        center = 0.5 * (box[:, 0] + box[:, 1])
        anchor = model.solve(center)
        training = _cell_training(model, box, path, seed, budget)
        space, trace = weak_greedy(model, training, n_max=n_cap,
                                   anchor=anchor, drop_tol=drop_tol)
        chosen = None
        for n in range(len(trace.eps_history)):
            sub = space.prefix(n, eps=float(trace.eps_history[n]))
            beta, mu = beta_mu(sub, system)
            cert = mu * sub.eps if np.isfinite(mu) else np.inf
            if chosen is None or cert < chosen[3]:
                chosen = (n, sub, mu, cert)
            if cert <= eps:
                chosen = (n, sub, mu, cert)
                break
        n_k, sub, mu, cert = chosen
        accepted = cert <= eps
        room = len(cells) + len(queue) + 2 <= budget.max_cells
        if accepted or not room:
            est = OneSpaceEstimator().fit(sub, system)
            cells.append(Cell(
                box=box, path=path, local_space=sub, local_map=est,
                n_k=n_k, eps_k=float(sub.eps), mu_k=float(mu),
                certificate=float(cert), certified=bool(accepted)))
            if not accepted:
                split_trace.append({"path": list(path),
                                    "event": "budget_exhausted",
                                    "certificate": float(cert)})
            continue
        j = _split_coordinate(model, anchor, training, box,
                              depth=len(path), rule=split_rule)
        mid = 0.5 * (box[j, 0] + box[j, 1])
        left = box.copy()
        left[j, 1] = mid
        right = box.copy()
        right[j, 0] = mid
        queue.append((left, path + (2 * j,)))
        queue.append((right, path + (2 * j + 1,)))
        split_trace.append({"path": list(path), "event": "split",
                            "coordinate": int(j),
                            "certificate": float(cert)})
    return PartitionedModel(
        model=model, system=system, cells=cells, target_eps=eps,
        split_trace=split_trace, seed=seed,
        certified=all(c.certified for c in cells))


def recover_pw(pm, observation, ls_cfg=None):
    """Model-selected recovery: evaluate every cell's local map on the
    data and keep the estimate with the smallest metric-projection
    surrogate (ties resolved to the lowest cell index)."""
    cfg = ls_cfg or pm.surrogate_cfg
    w = observation.w_coords if hasattr(observation, "w_coords") \
        else np.asarray(observation, dtype=float)
    candidates, s_vals, diag = [], [], []
    for k, cell in enumerate(pm.cells):
        u_k = cell.local_map.recover(w)
        s_k = metric_project(pm.model, u_k, ls_cfg=cfg).s_value
        candidates.append(u_k)
        s_vals.append(s_k)
        diag.append((k, float(s_k), cell.certificate))
    s_vals = np.asarray(s_vals)
    k_star = int(np.argmin(s_vals))
    return PwRecovery(u_star=candidates[k_star], k_star=k_star,
                      s_values=s_vals, diagnostics=diag)


class PiecewiseAffineEstimator(BaseEstimator):
    """Estimator facade over partition building and selection recovery."""

    def __init__(self, eps=1e-2, max_cells=64, n_max=None, tensor_k=5,
                 training_points=120, split_rule="variance", seed=0,
                 ls_tol=1e-8):
        self.eps = eps
        self.max_cells = max_cells
        self.n_max = n_max
        self.tensor_k = tensor_k
        self.training_points = training_points
        self.split_rule = split_rule
        self.seed = seed
        self.ls_tol = ls_tol

    def fit(self, model, system):
        budget = PartitionBudget(max_cells=self.max_cells,
                                 n_max=self.n_max,
                                 tensor_k=self.tensor_k,
                                 training_points=self.training_points)
        self.partition_ = build_partition(
            model, system, self.eps, budget=budget, seed=self.seed,
            split_rule=self.split_rule)
        self.partition_.surrogate_cfg = LsConfig(tol=self.ls_tol)
        return self

    def _check_fitted(self):
        if not hasattr(self, "partition_"):
            raise NotFittedError("call fit(model, system) first")

    def recover(self, observation):
        self._check_fitted()
        return recover_pw(self.partition_, observation)

    def predict(self, W):
        """Recover states from measurement coordinate rows (k, m)."""
        self._check_fitted()
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return np.vstack([self.recover(w).u_star for w in W])

    def certificate(self):
        self._check_fitted()
        return self.partition_.worst_certificate
