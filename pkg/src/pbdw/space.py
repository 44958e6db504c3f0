"""Discrete ambient space with its energy inner product.

The ambient space carries the H1_0 (semi)norm of the underlying finite
element discretization.  The Gram matrix is the unit-coefficient stiffness
matrix, factorized once; dual norms and Riesz lifts are Gram solves against
that cached factorization.
"""

import threading

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import RankDeficiencyError
from .validation import as_float_array


class DiscreteSpace:
    """Finite element coefficient space with a fixed SPD Gram matrix.

    Parameters
    ----------
    gram : scipy.sparse matrix, shape (dim, dim)
        SPD Gram matrix of the energy inner product.
    nodes : ndarray
        Node locations; shape (dim,) in 1d, (dim, 2) in 2d.  Used for
        sensor placement and export, not for any algebra.
    """

    def __init__(self, gram, nodes):
        gram = sp.csc_matrix(gram)
        if gram.shape[0] != gram.shape[1]:
            raise ValueError(f"gram must be square, got {gram.shape}")
        self.gram = gram
        self.nodes = np.asarray(nodes, dtype=float)
        self.dim = gram.shape[0]
        self._lock = threading.Lock()
        self._gram_solve = spla.factorized(gram)

    # -- inner product -----------------------------------------------------

    def inner(self, u, v):
        """Energy inner product of two coefficient vectors."""
        return float(np.dot(u, self.gram.dot(v)))

    def norm(self, u):
        """Energy norm; clips tiny negative roundoff under the sqrt."""
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    # -- duality -----------------------------------------------------------

    def riesz_lift(self, r):
        """Riesz representer of the dual vector ``r`` (one Gram solve)."""
        r = np.asarray(r, dtype=float)
        with self._lock:
            if r.ndim == 1:
                return self._gram_solve(r)
            return np.column_stack([self._gram_solve(col) for col in r.T])

    def dual_norm(self, r):
        """Dual norm sqrt(r^T G^{-1} r) of a dual vector."""
        r = as_float_array(r, name="dual vector", ndim=1)
        lift = self.riesz_lift(r)
        return float(np.sqrt(max(np.dot(r, lift), 0.0)))

    def dual_norms(self, R):
        """Dual norms of the rows of ``R``, shape (k, dim)."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        lifts = self.riesz_lift(R.T.copy()).T
        vals = np.einsum("ij,ij->i", R, lifts)
        return np.sqrt(np.maximum(vals, 0.0))

    # -- projections and bases ----------------------------------------------

    def coords(self, basis, u):
        """Coordinates of the orthogonal projection of ``u`` onto the span
        of the energy-orthonormal columns of ``basis``."""
        if basis.shape[1] == 0:
            return np.zeros(0)
        return basis.T @ self.gram.dot(u)

    def project(self, basis, u):
        """Orthogonal projection of ``u`` onto span(basis columns)."""
        if basis.shape[1] == 0:
            return np.zeros_like(u)
        return basis @ self.coords(basis, u)

    def orthonormalize(self, vectors, against=None, drop_tol=1e-10,
                       on_drop="error"):
        """Modified Gram-Schmidt in the energy inner product.

        One full reorthogonalization pass per vector.  A vector whose
        remainder falls below ``drop_tol`` times its original norm is
        rank-deficient relative to what precedes it.

        Parameters
        ----------
        vectors : ndarray, shape (dim, k)
            Columns to orthonormalize, in order.
        against : ndarray, shape (dim, p), optional
            Existing energy-orthonormal basis to deflate against first.
        on_drop : {"error", "skip"}
            "error" raises RankDeficiencyError naming the offending column,
            "skip" drops it and records the index.

        Returns
        -------
        basis : ndarray, shape (dim, k')
        dropped : list of int
            Indices (into ``vectors`` columns) that were skipped.
        """
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array of columns")
        cols = []
        if against is not None and against.shape[1] > 0:
            cols = [against[:, j].copy() for j in range(against.shape[1])]
        n_against = len(cols)
        dropped = []
        for i in range(vectors.shape[1]):
            v = vectors[:, i].copy()
            ref = self.norm(v)
            if ref == 0.0:
                if on_drop == "skip":
                    dropped.append(i)
                    continue
                raise RankDeficiencyError(
                    f"column {i} is zero in the energy norm", index=i)
            for _ in range(2):  # MGS + one reorthogonalization
                for q in cols:
                    v -= self.inner(q, v) * q
            nrm = self.norm(v)
            if nrm <= drop_tol * ref:
                if on_drop == "skip":
                    dropped.append(i)
                    continue
                raise RankDeficiencyError(
                    f"column {i} is linearly dependent on its predecessors "
                    f"(remainder {nrm:.3e} <= {drop_tol:.1e} * {ref:.3e})",
                    index=i)
            cols.append(v / nrm)
        new = cols[n_against:]
        if new:
            basis = np.column_stack(new)
        else:
            basis = np.zeros((self.dim, 0))
        return basis, dropped
