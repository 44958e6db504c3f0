"""Parametric diffusion model on the unit interval or square.

The operator family is affine in the parameter,

    A(y) = A_0 + sum_j y_j A_j,      y in [-1, 1]^d_y,

where A_0 is the stiffness matrix of the constant background coefficient
and A_j the stiffness matrix of the j-th subdomain bump c_j * chi_j.  The
subdomains are an equal-measure partition of the domain into d_y vertical
strips.  Discretization: P1 elements on a uniform 1d grid, or bilinear
elements on a uniform 2d tensor grid, with zero Dirichlet data.  The Gram
matrix of the ambient space is the unit-coefficient stiffness matrix.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, PbdwError, SolverError
from .hashing import sha256_hex
from .space import DiscreteSpace
from .validation import check_parameter, check_state

_FACTOR_CACHE_SIZE = 128
_VERTEX_CHECK_LIMIT = 256


@dataclass(frozen=True)
class ModelConfig:
    """Build-time description of the parametric model.

    Attributes
    ----------
    dx : int
        Spatial dimension, 1 or 2.
    n_mesh : int
        Elements per direction (>= 2).
    d_y : int
        Number of parameters / coefficient subdomains.
    a0 : float
        Constant background coefficient (> 0).
    coeff_profile : str
        "equal": c_j = rho / d_y;  "decay": c_j = rho * j**-2.
    rho : float
        Amplitude scale; sum |c_j| must stay below a0.
    f : float
        Constant load value, strictly positive.
    solver_tol : float
        Relative residual tolerance of direct solves.
    seed : int
        Seed for randomized spot checks.
    """

    dx: int = 1
    n_mesh: int = 200
    d_y: int = 4
    a0: float = 1.0
    coeff_profile: str = "equal"
    rho: float = 0.9
    f: float = 1.0
    solver_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.dx not in (1, 2):
            raise ConfigError("dx must be 1 or 2", key_path="model.dx")
        if int(self.n_mesh) != self.n_mesh or self.n_mesh < 2:
            raise ConfigError("n_mesh must be an integer >= 2",
                              key_path="model.n_mesh")
        if int(self.d_y) != self.d_y or self.d_y < 1:
            raise ConfigError("d_y must be an integer >= 1",
                              key_path="model.d_y")
        if not self.a0 > 0:
            raise ConfigError("a0 must be positive", key_path="model.a0")
        if self.coeff_profile not in ("equal", "decay"):
            raise ConfigError("coeff_profile must be 'equal' or 'decay'",
                              key_path="model.coeff_profile")
        if self.rho < 0:
            raise ConfigError("rho must be nonnegative", key_path="model.rho")
        if not self.f > 0:
            raise ConfigError("load f must be strictly positive",
                              key_path="model.f")
        if not self.solver_tol > 0:
            raise ConfigError("solver_tol must be positive",
                              key_path="model.solver_tol")
        c = self.amplitudes()
        if np.sum(np.abs(c)) >= self.a0:
            raise ConfigError(
                f"ellipticity violated: sum |c_j| = {np.sum(np.abs(c)):g} "
                f">= a0 = {self.a0:g}", key_path="model.rho")
        if self.dx == 2 and self.n_mesh % self.d_y != 0:
            raise ConfigError(
                "2d subdomain strips must align with the mesh: "
                f"n_mesh = {self.n_mesh} is not divisible by d_y = {self.d_y}",
                key_path="model.n_mesh")

    def amplitudes(self):
        """Subdomain amplitudes c_j, j = 1..d_y."""
        j = np.arange(1, self.d_y + 1, dtype=float)
        if self.coeff_profile == "equal":
            return np.full(self.d_y, self.rho / self.d_y)
        return self.rho * j ** -2.0

    def to_dict(self):
        return {
            "dx": self.dx, "n_mesh": self.n_mesh, "d_y": self.d_y,
            "a0": self.a0, "coeff_profile": self.coeff_profile,
            "rho": self.rho, "f": self.f, "solver_tol": self.solver_tol,
            "seed": self.seed,
        }


@dataclass
class Residual:
    """Residual of a trial state, kept in affine-component form.

    ``dual_vector`` equals ``components[0] + sum_j y_j components[j]``
    exactly; the components are R_0(v) = f - A_0 v and R_j(v) = -A_j v.
    """

    dual_vector: np.ndarray
    components: list = field(repr=False)


def _stiffness_1d(weights, h):
    """1d P1 stiffness for an elementwise-constant coefficient.

    ``weights[e]`` is the integral of the coefficient over element e
    divided by h (i.e. the element mean), so entries scale as mean / h.
    """
    n_el = len(weights)
    main = (weights[:-1] + weights[1:]) / h          # nodes 1..n-1
    off = -weights[1:-1] / h                         # shared interior elements
    return sp.diags([off, main, off], [-1, 0, 1], format="csc")


_KREF_2D = np.array([
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
]) / 6.0  # bilinear element on a square, unit coefficient; h cancels in 2d


def _stiffness_2d(cell_weights, n):
    """2d bilinear stiffness for a cellwise-constant coefficient.

    ``cell_weights`` has shape (n, n), indexed [cx, cy].
    """
    ni = n - 1
    cx, cy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cx = cx.ravel()
    cy = cy.ravel()
    w = np.asarray(cell_weights, dtype=float).ravel()
    # local corner offsets in (x, y): SW, SE, NE, NW
    offs = [(0, 0), (1, 0), (1, 1), (0, 1)]
    gidx = []
    interior = []
    for ox, oy in offs:
        gx, gy = cx + ox, cy + oy
        inside = (gx >= 1) & (gx <= ni) & (gy >= 1) & (gy <= ni)
        gidx.append((gy - 1) * ni + (gx - 1))
        interior.append(inside)
    rows, cols, data = [], [], []
    for a in range(4):
        for b in range(4):
            mask = interior[a] & interior[b]
            if not np.any(mask):
                continue
            rows.append(gidx[a][mask])
            cols.append(gidx[b][mask])
            data.append(w[mask] * _KREF_2D[a, b])
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ni * ni, ni * ni))
    return A.tocsc()


def _strip_overlaps_1d(n, d_y):
    """Overlap length of each element with each strip, shape (d_y, n).

    Exact also when strip boundaries cut elements.
    """
    h = 1.0 / n
    left = np.arange(n) * h
    right = left + h
    out = np.zeros((d_y, n))
    for j in range(d_y):
        lo, hi = j / d_y, (j + 1) / d_y
        out[j] = np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
    return out


class ParametricModel:
    """Assembled affine operator family with its ambient space.

    Use :func:`build_model` to construct instances.  The object is
    immutable after construction except for an internal factorization
    cache, which is lock-guarded.
    """

    def __init__(self, config, space, ops, load):
        self.config = config
        self.space = space
        self.ops = ops                       # [A_0, A_1, ..., A_dy], csc
        self.load = load
        self.d_y = config.d_y
        self.param_box = np.tile([-1.0, 1.0], (config.d_y, 1))
        self.amplitudes = config.amplitudes()
        s = float(np.sum(np.abs(self.amplitudes)))
        self.bounds = (config.a0 - s, config.a0 + s)   # (r, R)
        self.subdomain_measure = 1.0 / config.d_y
        self._load_dual_norm = space.dual_norm(load)
        self._lock = threading.Lock()
        self._factors = OrderedDict()

    # -- metadata ------------------------------------------------------------

    @property
    def config_hash(self):
        return sha256_hex(self.config.to_dict())

    # -- operators -----------------------------------------------------------

    def operator(self, y):
        """A(y) = A_0 + sum_j y_j A_j.  Does not validate y; callers that
        require membership in the parameter box must use :meth:`solve`."""
        y = np.asarray(y, dtype=float)
        A = self.ops[0].copy()
        for j in range(self.d_y):
            if y[j] != 0.0:
                A = A + y[j] * self.ops[j + 1]
        return A

    def _factorization(self, y):
        key = np.asarray(y, dtype=float).tobytes()
        with self._lock:
            if key in self._factors:
                return self._factors[key]
        lu = spla.splu(self.operator(y).tocsc())
        with self._lock:
            self._factors[key] = lu
            while len(self._factors) > _FACTOR_CACHE_SIZE:
                self._factors.popitem(last=False)
        return lu

    def solve(self, y):
        """Direct solve of A(y) u = f with iterative refinement.

        The returned state satisfies ||f - A(y) u||_dual <=
        solver_tol * ||f||_dual; deterministic for fixed (config, y).
        """
        y = check_parameter(y, self.d_y, self.param_box, name="y")
        lu = self._factorization(y)
        A = self.operator(y)
        u = lu.solve(self.load)
        tol = self.config.solver_tol * self._load_dual_norm
        for _ in range(3):
            r = self.load - A.dot(u)
            if self.space.dual_norm(r) <= tol:
                return u
            u = u + lu.solve(r)
        r = self.load - A.dot(u)
        if self.space.dual_norm(r) <= tol:
            return u
        raise SolverError(
            f"direct solve failed to reach relative residual "
            f"{self.config.solver_tol:g} at y = {y.tolist()}")

    def solve_many(self, Y):
        """Solve for each row of ``Y``; returns states as columns (dim, k)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.column_stack([self.solve(y) for y in Y])

    # -- residual calculus -----------------------------------------------------

    def residual(self, v, y):
        """Residual of trial state ``v`` at parameter ``y`` in component form."""
        v = check_state(self.space, v, name="v")
        y = np.asarray(y, dtype=float)
        comps = [self.load - self.ops[0].dot(v)]
        comps += [-self.ops[j + 1].dot(v) for j in range(self.d_y)]
        dual = comps[0].copy()
        for j in range(self.d_y):
            dual += y[j] * comps[j + 1]
        return Residual(dual_vector=dual, components=comps)

    def error_residual_envelope(self, v, y):
        """Two-sided bound on ||u(y) - v||: residual dual norm over (R, r)."""
        nr = self.space.dual_norm(self.residual(v, y).dual_vector)
        r, R = self.bounds
        return (nr / R, nr / r)

    # -- coefficient field ------------------------------------------------------

    def coefficient_at(self, x, y):
        """Pointwise coefficient a(x, y); ``x`` is the first spatial
        coordinate (the strips only depend on it)."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        j = np.clip((x * self.d_y).astype(int), 0, self.d_y - 1)
        return self.config.a0 + y[j] * self.amplitudes[j]

    def coefficient_distance(self, y1, y2):
        """L2 distance of the coefficient fields a(., y1) and a(., y2).

        Exact: the subdomain indicators are disjoint, so the squared
        distance is sum_j c_j^2 |I_j| (y1_j - y2_j)^2.
        """
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        d2 = np.sum(self.amplitudes ** 2 * (y1 - y2) ** 2) * self.subdomain_measure
        return float(np.sqrt(d2))

    # -- sanity checks -----------------------------------------------------------

    def _is_positive_definite(self, A):
        if self.config.dx == 1:
            ab = np.zeros((2, A.shape[0]))
            ab[0, 1:] = A.diagonal(1)
            ab[1] = A.diagonal()
            try:
                scipy.linalg.cholesky_banded(ab, lower=False)
                return True
            except scipy.linalg.LinAlgError:
                return False
        try:
            np.linalg.cholesky(A.toarray())
            return True
        except np.linalg.LinAlgError:
            return False

    def spot_check_vertices(self, n_vertices=None):
        """Verify positive definiteness of A(y) at parameter-box vertices.

        Checks all 2^d_y vertices when feasible (or when ``n_vertices``
        covers them), otherwise a seeded random sample.  Returns the number
        of vertices checked; raises on any failure.
        """
        total = 2 ** self.d_y
        if n_vertices is None:
            n_vertices = min(total, _VERTEX_CHECK_LIMIT)
        if n_vertices >= total:
            vertices = ((np.arange(total)[:, None] >> np.arange(self.d_y)) & 1)
            vertices = 2.0 * vertices - 1.0
        else:
            rng = np.random.default_rng(self.config.seed)
            vertices = rng.choice([-1.0, 1.0], size=(n_vertices, self.d_y))
        for v in vertices:
            if not self._is_positive_definite(self.operator(v)):
                raise PbdwError(
                    f"operator not positive definite at vertex {v.tolist()}")
        return len(vertices)


def build_model(config, check_vertices=True):
    """Assemble the model described by ``config``.

    Validation failures (ellipticity, mesh/strip misalignment, bad sizes)
    raise :class:`ConfigError` before any assembly work.
    """
    if not isinstance(config, ModelConfig):
        config = ModelConfig(**config)
    n = config.n_mesh
    c = config.amplitudes()
    if config.dx == 1:
        h = 1.0 / n
        nodes = np.arange(1, n) * h
        ones = np.ones(n)
        gram = _stiffness_1d(ones, h)
        overlaps = _strip_overlaps_1d(n, config.d_y)  # lengths
        ops = [config.a0 * gram]
        for j in range(config.d_y):
            ops.append(c[j] * _stiffness_1d(overlaps[j] / h, h))
        load = np.full(n - 1, config.f * h)
    else:
        ni = n - 1
        xs = np.arange(1, n) / n
        gx, gy = np.meshgrid(xs, xs, indexing="xy")
        nodes = np.column_stack([gx.ravel(), gy.ravel()])
        ones = np.ones((n, n))
        gram = _stiffness_2d(ones, n)
        per_strip = n // config.d_y
        ops = [config.a0 * gram]
        for j in range(config.d_y):
            w = np.zeros((n, n))
            w[j * per_strip:(j + 1) * per_strip, :] = 1.0
            ops.append(c[j] * _stiffness_2d(w, n))
        load = np.full(ni * ni, config.f / n ** 2)
    space = DiscreteSpace(gram, nodes)
    model = ParametricModel(config, space, [op.tocsc() for op in ops], load)
    if check_vertices:
        model.spot_check_vertices(min(2 ** config.d_y, 64))
    return model
