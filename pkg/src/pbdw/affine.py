"""Optimal affine recovery fitted on a finite manifold net.

The recovery map has the form A(w) = w + z + B w with z in a finite
working complement of the measurement space and B mapping measurement
coordinates into that complement.  Fitting minimizes the worst-case
recovery error over net snapshots; the per-snapshot error splits
exactly into the in-frame misfit plus a fixed out-of-frame offset, so
the fit is the certified min-max problem of :mod:`.minimax`.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import ConfigError
from .minimax import solve_minimax
from .validation import as_float_array, check_coords

_NET_BUDGET = 10 ** 6


@dataclass
class ManifoldNet:
    """Finite set of solved states standing in for the full manifold.

    states are columns (dim, N); params the generating parameters
    (N, d_y).  delta is the estimated fineness (max distance of a probe
    state to the net) when delta_mode is "probe-estimated", else the
    net is only nominally fine and delta is None.
    """

    states: np.ndarray
    params: np.ndarray
    delta: float = None
    delta_mode: str = "nominal"
    provenance: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.states.shape[1]


def net_from_training(model, training):
    """Solve all training points into a ManifoldNet."""
    states = training.ensure_snapshots(model)
    return ManifoldNet(
        states=states, params=training.points,
        provenance={"mode": training.mode, **training.meta,
                    "model": model.config_hash})


def net_from_grid(model, grid_per_dim):
    """Tensor-grid net with grid_per_dim points per parameter direction."""
    from .greedy import tensor_grid_training
    if grid_per_dim ** model.d_y > _NET_BUDGET:
        raise ConfigError(
            f"net size {grid_per_dim}^{model.d_y} exceeds the "
            f"{_NET_BUDGET} snapshot budget", key_path="net.grid_per_dim")
    return net_from_training(model, tensor_grid_training(model.d_y,
                                                         grid_per_dim))


def distances_to_states(space, probes, states):
    """Pairwise U-distances, probes (dim, P) x states (dim, N) -> (P, N)."""
    g_states = space.gram.dot(states)
    cross = probes.T @ g_states
    sq_p = np.einsum("ij,ij->j", probes, space.gram.dot(probes))
    sq_s = np.einsum("ij,ij->j", states, g_states)
    d2 = sq_p[:, None] + sq_s[None, :] - 2.0 * cross
    return np.sqrt(np.maximum(d2, 0.0))


def estimate_delta(model, net, probe_grid_per_dim):
    """A-posteriori net fineness: max over a finer tensor probe grid of
    the distance to the nearest net state.  Only affordable for low
    parameter dimension; the caller keeps "nominal" mode otherwise."""
    if probe_grid_per_dim ** model.d_y > _NET_BUDGET:
        raise ConfigError("probe grid exceeds the snapshot budget",
                          key_path="net.probe_grid_per_dim")
    probe_net = net_from_grid(model, probe_grid_per_dim)
    dmat = distances_to_states(model.space, probe_net.states, net.states)
    delta = float(np.max(np.min(dmat, axis=1)))
    net.delta = delta
    net.delta_mode = "probe-estimated"
    net.provenance["probe_grid_per_dim"] = probe_grid_per_dim
    return delta


def build_complement(space, system, u_l_basis, drop_tol=1e-10):
    """U-orthonormal basis of the complement of W inside U_L + W.

    Columns of u_l_basis span U_L; directions already captured by the
    measurement space deflate away, so p = dim(U_L + W) - m.
    """
    u_l_basis = as_float_array(u_l_basis, name="u_l_basis")
    if u_l_basis.ndim == 1:
        u_l_basis = u_l_basis[:, None]
    cols, _ = space.orthonormalize(u_l_basis, against=system.w_basis,
                                   drop_tol=drop_tol, on_drop="skip")
    return cols


def d_width_proxy(space, states, k):
    """(k+1)-th singular value of the empirical U-Gramian factor.

    Uses the 1/N-normalized Gramian.  With that normalization the value
    provably lower-bounds the worst recovery error over the states of
    any map whose range lies in a linear set of dimension at most k:
    the state matrix splits as a rank-k part plus the per-state error
    columns, so the (k+1)-th singular value of the raw factor is at
    most sqrt(N) times the largest error norm.  Without the
    normalization the bound fails in general (an aggregate spectral
    norm can exceed the largest column norm)."""
    n = states.shape[1]
    gram_net = states.T @ space.gram.dot(states) / n
    eigs = np.linalg.eigvalsh(gram_net)[::-1]
    sigmas = np.sqrt(np.maximum(eigs, 0.0))
    return float(sigmas[k]) if k < sigmas.size else 0.0


class AffineRecoveryEstimator(BaseEstimator):
    """Worst-case-optimal affine recovery over a manifold net.

    After fit: z_ (complement coordinates, shape (p,)), b_matrix_
    (m x p, row-vector convention: complement coords = z_ + w_coords @
    b_matrix_), complement_basis_ (dim x p), training_objective_,
    lower_bound_, suboptimality_, certified_, norm_b_ (operator norm of
    the coordinate matrix; equals the U-operator norm of B since both
    coordinate frames are U-orthonormal), eta_ (certified distance of
    the manifold to the working space U_L, when supplied).
    """

    def __init__(self, tol_opt=1e-6, ridge=1e-10, solver=None,
                 drop_tol=1e-10):
        self.tol_opt = tol_opt
        self.ridge = ridge
        self.solver = solver
        self.drop_tol = drop_tol

    def fit(self, system, net, u_l_basis, eta=None):
        comp = build_complement(system.space, system, u_l_basis,
                                drop_tol=self.drop_tol)
        space = system.space
        g_states = space.gram.dot(net.states)
        x = (system.w_basis.T @ g_states).T            # (N, m)
        t = (comp.T @ g_states).T                      # (N, p)
        sq = np.einsum("ij,ij->j", net.states, g_states)
        c = np.sqrt(np.maximum(
            sq - np.einsum("ij,ij->i", x, x) - np.einsum("ij,ij->i", t, t),
            0.0))
        sol = solve_minimax(x, t, c, tol_opt=self.tol_opt,
                            ridge=self.ridge, solver=self.solver)
        self.system_ = system
        self.complement_basis_ = comp
        self.z_ = sol.z
        self.b_matrix_ = sol.b_matrix.T                # (m, p)
        self.training_objective_ = sol.objective
        self.lower_bound_ = sol.lower_bound
        self.suboptimality_ = sol.suboptimality
        self.certified_ = sol.certified
        self.objective_history_ = sol.objective_history
        self.norm_b_ = float(np.linalg.svd(self.b_matrix_,
                                           compute_uv=False)[0]) \
            if min(self.b_matrix_.shape) else 0.0
        self.eta_ = eta
        self.net_size_ = net.size
        self.delta_ = net.delta
        return self

    def _check_fitted(self):
        if not hasattr(self, "z_"):
            raise NotFittedError("call fit(system, net, u_l_basis) first")

    def predict(self, W):
        """Recover states from measurement coordinate rows (k, m)."""
        self._check_fitted()
        W = np.atleast_2d(as_float_array(W, name="W"))
        check_coords(self.system_, W[0])
        comp_coords = self.z_[None, :] + W @ self.b_matrix_
        states = W @ self.system_.w_basis.T \
            + comp_coords @ self.complement_basis_.T
        return states

    def recover(self, observation):
        self._check_fitted()
        w = observation.w_coords if hasattr(observation, "w_coords") \
            else np.asarray(observation, dtype=float)
        return self.predict(w[None, :])[0]

    def errors_on(self, states):
        """Per-state recovery errors |u - A(P_W u)|, computed on full
        vectors (independent of the coordinate split used in fit)."""
        self._check_fitted()
        space = self.system_.space
        coords = self.system_.coords_many(states)
        recon = self.predict(coords.T).T
        diff = states - recon
        return np.sqrt(np.maximum(
            np.einsum("ij,ij->j", diff, space.gram.dot(diff)), 0.0))

    def certificate(self):
        """Worst-case bound over any state within delta of the net:
        training objective + (1 + |B|) * delta, the Lipschitz constant
        of u -> u - A(P_W u) being at most 1 + |B|.  None when the net
        fineness was not estimated."""
        self._check_fitted()
        if self.delta_ is None:
            return None
        return self.training_objective_ + (1.0 + self.norm_b_) * self.delta_
