"""Sensors, Riesz representers, and the observation space W.

Each sensor is a bounded linear functional: a local average over an
interval (1d) or an axis-aligned box (2d), or a point evaluation (1d
only, where point values are bounded on H1_0).  The observation space W
is spanned by the Riesz representers of the functionals; its
energy-orthonormal basis is built by modified Gram-Schmidt with one
reorthogonalization pass.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import ConfigError, RankDeficiencyError
from .validation import as_float_array, check_coords, check_state

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SensorSpec:
    """One sensor: ``kind`` in {"local_average", "point_value"}.

    ``center`` is a float in 1d or a pair in 2d; ``width`` likewise
    (point values take no width).  Supports must stay inside the domain.
    """

    kind: str
    center: object
    width: object = None

    def __post_init__(self):
        if self.kind not in ("local_average", "point_value"):
            raise ConfigError(f"unknown sensor kind '{self.kind}'",
                              key_path="sensors.kind")
        if self.kind == "point_value" and self.width is not None:
            raise ConfigError("point_value sensors take no width",
                              key_path="sensors.width")
        if self.kind == "local_average" and self.width is None:
            raise ConfigError("local_average sensors need a width",
                              key_path="sensors.width")


def _interval_average_vector(space, n_mesh, center, width):
    """Exact functional vector of (1/w) * integral over [c-w/2, c+w/2]
    against 1d P1 hat functions."""
    lo, hi = center - width / 2.0, center + width / 2.0
    if lo < -1e-12 or hi > 1.0 + 1e-12:
        raise ConfigError(
            f"sensor support [{lo:g}, {hi:g}] leaves the domain [0, 1]",
            key_path="sensors.center")
    h = 1.0 / n_mesh
    out = np.zeros(space.dim)
    e_lo = max(int(np.floor(lo / h)), 0)
    e_hi = min(int(np.ceil(hi / h)), n_mesh)
    for e in range(e_lo, e_hi):
        a = max(lo, e * h)
        b = min(hi, (e + 1) * h)
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        t = (mid - e * h) / h          # barycentric coordinate of midpoint
        # nodes e and e+1 bound element e; global interior index = node - 1
        if e >= 1:
            out[e - 1] += (1.0 - t) * (b - a)
        if e + 1 <= n_mesh - 1:
            out[e] += t * (b - a)
    return out / width


def _box_average_vector(space, n_mesh, center, width):
    """Exact functional vector of a box average against 2d bilinears.

    The centroid rule is exact for bilinear integrands on axis-aligned
    rectangles, so the element-by-element accumulation below is exact.
    """
    cx, cy = center
    wx, wy = width
    lox, hix = cx - wx / 2.0, cx + wx / 2.0
    loy, hiy = cy - wy / 2.0, cy + wy / 2.0
    if min(lox, loy) < -1e-12 or max(hix, hiy) > 1.0 + 1e-12:
        raise ConfigError(
            "sensor box leaves the domain [0, 1]^2", key_path="sensors.center")
    h = 1.0 / n_mesh
    ni = n_mesh - 1
    out = np.zeros(space.dim)
    ex_range = range(max(int(lox / h), 0), min(int(np.ceil(hix / h)), n_mesh))
    ey_range = range(max(int(loy / h), 0), min(int(np.ceil(hiy / h)), n_mesh))
    for ex in ex_range:
        ax, bx = max(lox, ex * h), min(hix, (ex + 1) * h)
        if bx <= ax:
            continue
        tx = (0.5 * (ax + bx) - ex * h) / h
        for ey in ey_range:
            ay, by = max(loy, ey * h), min(hiy, (ey + 1) * h)
            if by <= ay:
                continue
            ty = (0.5 * (ay + by) - ey * h) / h
            area = (bx - ax) * (by - ay)
            for gx, gy, wgt in (
                (ex, ey, (1 - tx) * (1 - ty)), (ex + 1, ey, tx * (1 - ty)),
                (ex + 1, ey + 1, tx * ty), (ex, ey + 1, (1 - tx) * ty),
            ):
                if 1 <= gx <= ni and 1 <= gy <= ni:
                    out[(gy - 1) * ni + (gx - 1)] += wgt * area
    return out / (wx * wy)


def functional_vector(space, n_mesh, dx, spec):
    """Dual vector of one sensor functional on the discrete space."""
    if spec.kind == "point_value":
        if dx != 1:
            raise ConfigError("point_value sensors are 1d-only",
                              key_path="sensors.kind")
        x0 = float(spec.center)
        if not 0.0 <= x0 <= 1.0:
            raise ConfigError(f"point {x0:g} outside [0, 1]",
                              key_path="sensors.center")
        h = 1.0 / n_mesh
        e = min(int(x0 / h), n_mesh - 1)
        t = (x0 - e * h) / h
        out = np.zeros(space.dim)
        if e >= 1:
            out[e - 1] += 1.0 - t
        if e + 1 <= n_mesh - 1:
            out[e] += t
        return out
    if dx == 1:
        return _interval_average_vector(space, n_mesh,
                                        float(spec.center), float(spec.width))
    center = np.atleast_1d(np.asarray(spec.center, dtype=float))
    width = np.atleast_1d(np.asarray(spec.width, dtype=float))
    if center.size == 1:
        center = np.repeat(center, 2)
    if width.size == 1:
        width = np.repeat(width, 2)
    return _box_average_vector(space, n_mesh, center, width)


@dataclass
class Observation:
    """Measured data of one state.

    ``w_coords`` are coordinates of P_W u in the orthonormal W-basis;
    ``raw`` are the sensor readings themselves.  The two are related by a
    fixed triangular change of basis and carry the same information.
    """

    w_coords: np.ndarray
    raw: np.ndarray
    noise_model: str = "none"
    noise_level: float = 0.0
    applied_to: str = "coords"


@dataclass(frozen=True)
class NoiseSpec:
    """Synthetic measurement noise.

    kind = "none" | "bounded" | "gaussian".  Bounded noise is a uniform
    draw from the euclidean ``level``-ball in W-coordinates.  Gaussian
    noise is i.i.d. N(0, level^2) applied to raw readings by default;
    ``apply_to`` may force W-coordinates instead.
    """

    kind: str = "none"
    level: float = 0.0
    apply_to: str = None

    def __post_init__(self):
        if self.kind not in ("none", "bounded", "gaussian"):
            raise ConfigError(f"unknown noise kind '{self.kind}'",
                              key_path="noise.kind")
        if self.level < 0:
            raise ConfigError("noise level must be >= 0",
                              key_path="noise.level")
        target = self.apply_to
        if target is None:
            target = "coords" if self.kind != "gaussian" else "raw"
        elif self.kind == "bounded" and target != "coords":
            raise ConfigError("bounded noise is defined in W-coordinates",
                              key_path="noise.apply_to")
        elif target not in ("coords", "raw"):
            raise ConfigError("apply_to must be 'coords' or 'raw'",
                              key_path="noise.apply_to")
        object.__setattr__(self, "apply_to", target)


class MeasurementSystem:
    """Observation space W with its sensors and orthonormal basis.

    Attributes
    ----------
    functionals : ndarray (dim, m)
        Sensor dual vectors, one column per sensor.
    representers : ndarray (dim, m)
        Riesz lifts of the functionals.
    w_basis : ndarray (dim, m)
        Energy-orthonormal basis of W (Gram-Schmidt of the representers).
    metadata : dict
        Representer Gramian conditioning record.
    """

    def __init__(self, space, sensors, functionals, representers, w_basis,
                 metadata):
        self.space = space
        self.sensors = list(sensors)
        self.functionals = functionals
        self.representers = representers
        self.w_basis = w_basis
        self.metadata = metadata
        self.m = w_basis.shape[1]
        # representers in the orthonormal basis: psi_i = w_basis @ R[:, i]
        self._mix = w_basis.T @ space.gram.dot(representers)

    # -- projection ---------------------------------------------------------

    def coords(self, u):
        """W-coordinates of P_W u (exact observation of ``u``)."""
        return self.w_basis.T @ self.space.gram.dot(u)

    def coords_many(self, U):
        """W-coordinates of the columns of ``U``; returns (m, k)."""
        return self.w_basis.T @ self.space.gram.dot(U)

    def project(self, u):
        """Split ``u`` into (w_part, w_perp_part); the parts are
        energy-orthogonal and sum to ``u``."""
        u = check_state(self.space, u, name="u")
        w_part = self.w_basis @ self.coords(u)
        return w_part, u - w_part

    def state_from_coords(self, w):
        """Element of W with the given coordinates."""
        w = check_coords(self, w, name="w")
        return self.w_basis @ w

    # -- raw readings ---------------------------------------------------------

    def apply_functionals(self, u):
        """Raw sensor readings l_i(u)."""
        return self.functionals.T @ u

    def coords_from_raw(self, raw):
        """Invert the triangular change of basis raw = mix^T @ coords."""
        raw = as_float_array(raw, name="raw", ndim=1)
        if raw.shape[0] != self.m:
            raise ValueError(f"expected {self.m} readings, got {raw.shape[0]}")
        return scipy.linalg.solve_triangular(self._mix.T, raw, lower=True)

    def raw_from_coords(self, w):
        return self._mix.T @ w

    # -- observation ------------------------------------------------------------

    def observe(self, u, noise=None, rng=None):
        """Observe a state, optionally with synthetic noise.

        ``rng`` may be a seed or a numpy Generator; required for noisy
        observations so draws are reproducible.
        """
        u = check_state(self.space, u, name="u")
        clean = self.coords(u)
        noise = noise or NoiseSpec()
        if noise.kind == "none" or noise.level == 0.0:
            return Observation(w_coords=clean,
                               raw=self.raw_from_coords(clean))
        if rng is None:
            raise ValueError("noisy observation requires an rng or seed")
        rng = np.random.default_rng(rng)
        if noise.kind == "bounded":
            direction = rng.standard_normal(self.m)
            direction /= np.linalg.norm(direction)
            radius = noise.level * rng.uniform() ** (1.0 / self.m)
            coords = clean + radius * direction
            return Observation(w_coords=coords,
                               raw=self.raw_from_coords(coords),
                               noise_model="bounded", noise_level=noise.level,
                               applied_to="coords")
        if noise.apply_to == "raw":
            raw = self.raw_from_coords(clean) + \
                noise.level * rng.standard_normal(self.m)
            return Observation(w_coords=self.coords_from_raw(raw), raw=raw,
                               noise_model="gaussian",
                               noise_level=noise.level, applied_to="raw")
        coords = clean + noise.level * rng.standard_normal(self.m)
        return Observation(w_coords=coords, raw=self.raw_from_coords(coords),
                           noise_model="gaussian", noise_level=noise.level,
                           applied_to="coords")


def build_system(model, sensor_specs, rank_tol=RANK_TOL):
    """Build the measurement system of a model from sensor specs.

    Raises :class:`RankDeficiencyError` naming the first sensor whose
    representer is numerically dependent on its predecessors.
    """
    space = model.space
    specs = [s if isinstance(s, SensorSpec) else SensorSpec(**s)
             for s in sensor_specs]
    if not specs:
        raise ConfigError("at least one sensor is required",
                          key_path="sensors")
    L = np.column_stack([
        functional_vector(space, model.config.n_mesh, model.config.dx, s)
        for s in specs])
    psi = space.riesz_lift(L)
    gramian = psi.T @ L                    # <psi_i, psi_j>_U = psi_i^T l_j
    gramian = 0.5 * (gramian + gramian.T)
    eigs = np.linalg.eigvalsh(gramian)
    metadata = {
        "gramian_min_eig": float(eigs[0]),
        "gramian_max_eig": float(eigs[-1]),
        "gramian_cond": float(eigs[-1] / eigs[0]) if eigs[0] > 0 else float("inf"),
    }
    try:
        w_basis, _ = space.orthonormalize(psi, drop_tol=rank_tol,
                                          on_drop="error")
    except RankDeficiencyError as err:
        raise RankDeficiencyError(
            f"sensor {err.index} is redundant: its representer is "
            f"numerically dependent on sensors 0..{err.index - 1}",
            index=err.index) from err
    return MeasurementSystem(space, specs, L, psi, w_basis, metadata)


def equispaced_average_sensors(m, width):
    """Convenience: m interval averages centered at (2i+1)/(2m)."""
    return [SensorSpec("local_average", (2 * i + 1) / (2 * m), width)
            for i in range(m)]


def equispaced_box_sensors(m_per_side, width):
    """Convenience (2d): m_per_side^2 box averages on a uniform grid."""
    out = []
    for iy in range(m_per_side):
        for ix in range(m_per_side):
            cx = (2 * ix + 1) / (2 * m_per_side)
            cy = (2 * iy + 1) / (2 * m_per_side)
            out.append(SensorSpec("local_average", (cx, cy), (width, width)))
    return out
