"""One-space recovery: data-consistent optimal recovery over w + W_perp.

Given a reduced space U_n and observations in W, the recovered state is
the element of the data-consistent affine family closest to U_n.  Its
stability factor is mu = 1/beta, beta the smallest singular value of the
cross-Gramian between orthonormal bases of W and U_n; mu also equals the
operator norm of the recovery map, and mu * eps_n is the worst-case error
certificate over the cylinder of states within eps_n of U_n.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import UnstableRecoveryError
from .validation import as_float_array, check_basis

BETA_RANK_TOL = 1e-10


@dataclass
class ReducedSpace:
    """A (possibly affine) reduced space.

    ``basis`` holds energy-orthonormal columns spanning the linear part;
    ``anchor`` shifts it into an affine family (None means linear).
    ``eps`` is a certified bound on the distance of the manifold (or of
    the training set used to build the space) to the space.
    """

    basis: np.ndarray
    anchor: np.ndarray = None
    eps: float = None
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.basis.shape[1]

    def prefix(self, n, eps=None):
        """Sub-space spanned by the first ``n`` basis columns."""
        return ReducedSpace(basis=self.basis[:, :n], anchor=self.anchor,
                            eps=eps,
                            provenance=dict(self.provenance, prefix_of=self.n))


def cross_gramian(system, basis):
    """Cross-Gramian between the W-basis and a reduced basis, shape (m, n)."""
    return system.w_basis.T @ system.space.gram.dot(basis)


def beta_mu(reduced, system, rank_tol=BETA_RANK_TOL):
    """Stability pair (beta, mu) of a reduced space against W.

    beta is the smallest singular value of the m x n cross-Gramian (the
    inf over unit elements of U_n of the norm of their W-projection);
    mu = 1/beta, rendered as inf when beta falls below ``rank_tol``.
    A zero-dimensional space has beta = mu = 1 by convention.  n > m
    forces beta = 0 with a warning: U_n then meets W_perp nontrivially.
    """
    basis = reduced.basis if isinstance(reduced, ReducedSpace) else reduced
    basis = check_basis(system.space, basis, name="reduced basis")
    n = basis.shape[1]
    if n == 0:
        return 1.0, 1.0
    if n > system.m:
        warnings.warn(
            f"reduced dimension n = {n} exceeds sensor count m = {system.m}; "
            "the recovery map is necessarily unstable (beta = 0)")
        return 0.0, float("inf")
    S = cross_gramian(system, basis)
    sigma = np.linalg.svd(S, compute_uv=False)
    beta = float(sigma[-1])
    mu = 1.0 / beta if beta > rank_tol else float("inf")
    return beta, mu


class OneSpaceEstimator(BaseEstimator):
    """Data-consistent recovery map attached to one reduced space.

    Fit precomputes the SVD of the cross-Gramian; predict maps observation
    coordinates to full states.  Estimators are linear when the reduced
    space has no anchor, affine otherwise (the anchor is subtracted on the
    data side, recovered in the linear space, and added back).

    Parameters
    ----------
    rank_tol : float
        Threshold on beta below which the map is refused as undefined.
    """

    def __init__(self, rank_tol=BETA_RANK_TOL):
        self.rank_tol = rank_tol

    # -- fitting -------------------------------------------------------------

    def fit(self, reduced, system):
        """Precompute the recovery map of ``reduced`` against ``system``."""
        if not isinstance(reduced, ReducedSpace):
            reduced = ReducedSpace(basis=np.asarray(reduced, dtype=float))
        check_basis(system.space, reduced.basis, name="reduced basis")
        self.reduced_ = reduced
        self.system_ = system
        self.beta_, self.mu_ = beta_mu(reduced, system, self.rank_tol)
        n = reduced.n
        if n > 0:
            S = cross_gramian(system, reduced.basis)
            X, sigma, Yt = np.linalg.svd(S, full_matrices=False)
            cutoff = self.rank_tol * (sigma[0] if sigma.size else 1.0)
            keep = sigma > cutoff
            self._pinv = (Yt[keep].T * (1.0 / sigma[keep])) @ X[:, keep].T
            self._S = S
        else:
            self._S = np.zeros((system.m, 0))
            self._pinv = np.zeros((0, system.m))
        if reduced.anchor is not None:
            self._anchor_coords = system.coords(reduced.anchor)
        else:
            self._anchor_coords = None
        self.certificate_ = (
            self.mu_ * reduced.eps if reduced.eps is not None else None)
        return self

    def _check_fitted(self):
        if not hasattr(self, "system_"):
            raise NotFittedError("call fit(reduced, system) first")

    # -- recovery --------------------------------------------------------------

    def predict(self, W):
        """Recover states from observation coordinate rows, shape (k, m).

        Each recovered state reproduces its data: P_W u* has exactly the
        given coordinates.  Raises UnstableRecoveryError when beta is
        below the rank threshold (U_n meets W_perp).
        """
        self._check_fitted()
        if not np.isfinite(self.mu_):
            raise UnstableRecoveryError(
                f"recovery map undefined: beta = {self.beta_:.3e} below "
                f"rank tolerance {self.rank_tol:.1e}")
        W = np.atleast_2d(as_float_array(W, name="W"))
        if W.shape[1] != self.system_.m:
            raise ValueError(
                f"expected {self.system_.m} coordinates per row, "
                f"got {W.shape[1]}")
        A = W.T                                    # (m, k) coordinate columns
        if self._anchor_coords is not None:
            A = A - self._anchor_coords[:, None]
        B = self._pinv @ A                         # (n, k) reduced coefficients
        states = (self.reduced_.basis @ B
                  + self.system_.w_basis @ (A - self._S @ B))
        if self._anchor_coords is not None:
            states = states + self.reduced_.anchor[:, None]
        return states.T

    def recover(self, observation):
        """Recover a single state from an Observation or coordinate vector."""
        w = getattr(observation, "w_coords", observation)
        return self.predict(np.atleast_2d(w))[0]

    # -- certificates -------------------------------------------------------------

    def certify(self, noise_level=0.0):
        """Worst-case certificate mu * (eps + noise_level) over the cylinder
        of states within eps of the reduced space; stores the clean value."""
        self._check_fitted()
        if self.reduced_.eps is None:
            raise ValueError("reduced space carries no certified eps")
        self.certificate_ = self.mu_ * self.reduced_.eps
        if noise_level:
            return self.mu_ * (self.reduced_.eps + noise_level)
        return self.certificate_

    def extremal_direction(self):
        """A worst-case cylinder direction and its attained error ratio.

        Returns (e, ratio): a unit vector orthogonal to U_n maximizing
        ||e - A(P_W e)||; the ratio equals mu up to roundoff, so
        anchor + eps * e attains the certificate mu * eps on the cylinder.
        """
        self._check_fitted()
        space = self.system_.space
        # sup over e orth. to U_n splits over (U_n + W) and its complement;
        # the identity passes the complement through with ratio 1.
        V0, _ = space.orthonormalize(self.system_.w_basis,
                                     against=self.reduced_.basis,
                                     on_drop="skip")
        best_ratio, best_e = 1.0, None
        if V0.shape[1] > 0:
            coords = self.system_.coords_many(V0)        # (m, q)
            rec = self.predict(coords.T)                 # linear part on V0
            if self._anchor_coords is not None:
                # remove the affine offset: the error operator acts linearly
                base = self.predict(np.zeros((1, self.system_.m)))[0]
                rec = rec - base[None, :]
            T = V0 - rec.T
            H = T.T @ space.gram.dot(T)
            vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
            if np.sqrt(max(vals[-1], 0.0)) > best_ratio:
                best_ratio = float(np.sqrt(vals[-1]))
                best_e = V0 @ vecs[:, -1]
        if best_e is None:
            # mu = 1; any direction orthogonal to U_n + W attains ratio 1
            joint = np.column_stack([self.reduced_.basis,
                                     self.system_.w_basis])
            basis, _ = space.orthonormalize(joint, on_drop="skip")
            for k in range(space.dim):
                seed = np.zeros(space.dim)
                seed[k] = 1.0
                e = seed - space.project(basis, seed)
                if space.norm(e) > 1e-8:
                    best_e = e / space.norm(e)
                    break
        return best_e, best_ratio
