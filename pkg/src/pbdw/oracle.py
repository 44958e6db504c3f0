"""Brute-force reference quantities computed on a dense manifold net.

Everything here is deliberately exhaustive: worst cases are found by
scanning every net state (or every pair of net states) instead of by
optimization, so the results can serve as ground truth when judging the
certificates produced by the fast estimators.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .affine import ManifoldNet, estimate_delta, net_from_grid
from .exceptions import ConfigError
from .hashing import sha256_hex
from .validation import as_float_array

# hard ceilings so a careless config cannot run for hours
_NET_BUDGET = 1_000_000
_PAIR_BUDGET = 10_000_000
# defaults keep the full pair scan within the pair budget
_DEFAULT_MAX_STATES = 3000
_CACHE_ENV = "PBDW_CACHE_DIR"


# ---------------------------------------------------------------------------
# net construction with optional disk cache


def _default_grid(d_y, max_states):
    """Largest odd per-direction grid with grid**d_y <= max_states."""
    g = max(3, int(max_states ** (1.0 / d_y)))
    if g % 2 == 0:
        g -= 1
    g = min(g, 61)
    while g > 3 and g ** d_y > max_states:
        g -= 2
    return g


def manifold_net(model, grid_per_dim=None, max_states=_DEFAULT_MAX_STATES,
                 cache_dir=None):
    """Tensor-grid net of solved states, cached on disk when possible.

    The cache directory is ``cache_dir`` or the ``PBDW_CACHE_DIR``
    environment variable; with neither set the net is rebuilt from
    scratch.  Cache entries are keyed by the model configuration hash and
    the grid, so a stale file can never be returned for a different
    model.
    """
    if grid_per_dim is None:
        grid_per_dim = _default_grid(model.d_y, max_states)
    if grid_per_dim < 2:
        raise ConfigError("grid_per_dim must be at least 2",
                          key_path="oracle.grid_per_dim")
    if grid_per_dim ** model.d_y > _NET_BUDGET:
        raise ConfigError(
            f"net size {grid_per_dim}**{model.d_y} exceeds the "
            f"{_NET_BUDGET} state budget", key_path="oracle.grid_per_dim")

    cache_dir = cache_dir or os.environ.get(_CACHE_ENV)
    key = sha256_hex({"model": model.config_hash, "kind": "tensor",
                      "grid": int(grid_per_dim)})
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"net-{key[:24]}.npz")
        if os.path.exists(path):
            with np.load(path, allow_pickle=False) as payload:
                if str(payload["key"]) == key:
                    return ManifoldNet(
                        states=payload["states"], params=payload["params"],
                        provenance={"mode": "tensor",
                                    "grid_per_dim": int(grid_per_dim),
                                    "model": model.config_hash,
                                    "cache": "hit"})

    net = net_from_grid(model, grid_per_dim)
    net.provenance["grid_per_dim"] = int(grid_per_dim)
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp.npz"
        np.savez(tmp, states=net.states, params=net.params, key=key)
        os.replace(tmp, path)
    return net


# ---------------------------------------------------------------------------
# observation slices


def default_slice_tol(net, system):
    """Matching slack used when no explicit one is given.

    Scaled to the data: one thousandth of the median observed-part norm
    over the net, so "same observation" means equality up to roundoff
    and net-resolution effects rather than an absolute magic number.
    """
    coords = system.coords_many(net.states)
    med = float(np.median(np.linalg.norm(coords, axis=0)))
    return 1e-3 * med if med > 0.0 else 1e-12


def slice_and_radius(net, system, w, eps_slice):
    """Net states consistent with observation ``w`` and their spread.

    Returns ``(members, radius_lb)`` where ``members`` are the indices of
    net states whose observed part lies within ``eps_slice`` of ``w``.
    ``radius_lb`` is half the largest pairwise distance among members, a
    lower bound for the Chebyshev radius of the slice; it is ``None``
    when the slice is empty and ``0.0`` when it is a singleton.
    """
    w = as_float_array(w, name="w", ndim=1)
    if w.shape[0] != system.m:
        raise ValueError(f"expected {system.m} coordinates, got {w.shape[0]}")
    coords = system.coords_many(net.states)
    dist_w = np.linalg.norm(coords - w[:, None], axis=0)
    members = np.flatnonzero(dist_w <= eps_slice)
    if members.size == 0:
        return members, None
    if members.size == 1:
        return members, 0.0
    sub = net.states[:, members]
    g_sub = net_gram(system.space, sub)
    n2 = np.diag(g_sub)
    d2 = n2[:, None] + n2[None, :] - 2.0 * g_sub
    diam = float(np.sqrt(max(d2.max(), 0.0)))
    return members, 0.5 * diam


def net_gram(space, states):
    """Inner-product matrix of the given state columns."""
    return states.T @ space.gram.dot(states)


# ---------------------------------------------------------------------------
# worst-case indistinguishable pairs


def delta_eps_bruteforce(net, system, eps, eps_slice=None,
                         block=512):
    """Worst distance between blurred net states sharing an observation.

    For each net pair (i, j) this maximizes ``||p - q||`` over
    ``p in B(u_i, eps)``, ``q in B(u_j, eps)`` subject to
    ``||P_W (p - q)|| <= eps_slice``; the per-pair optimum has a closed
    form in the split distances, so the scan is exact.  The maximum over
    all pairs bounds from above the spread of any observation slice of
    the eps-blurred net, and from below twice the worst-case error of an
    optimal estimator on it.

    Monotone increasing in both ``eps`` and net refinement (adding
    states can only add pairs).
    """
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if eps_slice is None:
        eps_slice = default_slice_tol(net, system)
    n_states = net.states.shape[1]
    if n_states * n_states > _PAIR_BUDGET:
        raise ConfigError(
            f"{n_states}**2 pairs exceed the {_PAIR_BUDGET} pair budget",
            key_path="oracle.net")

    space = system.space
    if system.w_basis.shape[1] >= space.dim:
        # W is the whole ambient space: the observation constraint
        # pins p = q, so every pair (including i = j) contributes 0
        return 0.0
    g_states = space.gram.dot(net.states)
    n2 = np.einsum("ij,ij->j", net.states, g_states)
    coords = system.w_basis.T @ g_states  # (m, N)
    c2 = np.einsum("ij,ij->j", coords, coords)

    cap = 2.0 * eps
    thresh = eps_slice + cap
    # Gram-trick distances carry an absolute cancellation error of about
    # ``slop``; when the feasibility threshold sits near that floor the
    # candidate pairs are recomputed from explicit differences (cheap,
    # there are few of them), otherwise the error is negligible
    slop = 64.0 * np.finfo(float).eps * max(float(c2.max(initial=0.0)), 1.0)
    exact_repair = thresh * thresh <= 1e6 * slop
    best = cap  # the i = j pairs always contribute 2 eps
    for lo in range(0, n_states, block):
        hi = min(lo + block, n_states)
        dw2 = c2[lo:hi, None] + c2[None, :] - 2.0 * (
            coords[:, lo:hi].T @ coords)
        np.clip(dw2, 0.0, None, out=dw2)

        if exact_repair:
            rows, cols = np.nonzero(dw2 <= thresh * thresh + slop)
            off_diag = lo + rows != cols  # i = j contributes exactly cap
            rows, cols = rows[off_diag], cols[off_diag]
            if rows.size == 0:
                continue
            diff_w = coords[:, lo + rows] - coords[:, cols]
            dw2_exact = np.einsum("ij,ij->j", diff_w, diff_w)
            keep = dw2_exact <= thresh * thresh
            rows, cols = rows[keep], cols[keep]
            if rows.size == 0:
                continue
            dw = np.sqrt(dw2_exact[keep])
            d2 = np.empty(rows.size)
            for p0 in range(0, rows.size, 4096):
                p1 = min(p0 + 4096, rows.size)
                diff = (net.states[:, lo + rows[p0:p1]]
                        - net.states[:, cols[p0:p1]])
                d2[p0:p1] = np.einsum("ij,ij->j", diff,
                                      space.gram.dot(diff))
            d2 = np.maximum(d2, dw * dw)
        else:
            feas = dw2 <= thresh * thresh
            rows, cols = np.nonzero(feas)
            off_diag = lo + rows != cols
            rows, cols = rows[off_diag], cols[off_diag]
            if rows.size == 0:
                continue
            d2_blk = n2[lo:hi, None] + n2[None, :] - 2.0 * (
                net.states[:, lo:hi].T @ g_states)
            dw = np.sqrt(dw2[rows, cols])
            d2 = np.maximum(d2_blk[rows, cols], dw * dw)

        d = np.sqrt(d2)
        dp = np.sqrt(np.maximum(d2 - dw * dw, 0.0))
        # fully transferable pairs: the observation gap closes before the
        # movement budget is spent, leaving the rest to stretch d itself
        aligned = dw * (1.0 + np.divide(cap, d, out=np.zeros_like(d),
                                        where=d > 0.0))
        full = aligned <= eps_slice
        vals = np.where(full, d + cap, 0.0)
        partial = ~full
        if np.any(partial):
            room = np.sqrt(np.clip(cap * cap
                                   - (eps_slice - dw) ** 2, 0.0, None))
            cand = np.sqrt(eps_slice ** 2 + (dp + room) ** 2)
            vals = np.where(partial, cand, vals)
        if vals.size:
            best = max(best, float(vals.max()))
    return best


def wc_error_bruteforce(net, system, estimator, block=256):
    """Largest recovery error of ``estimator`` over exact net observations.

    ``estimator`` is either an object with ``predict(W) -> states`` for a
    stack of observation rows, or a callable with the same contract.
    Returns ``(worst_error, worst_index)``; the worst error realized on
    the net is a certified lower bound for the true worst-case error
    over the manifold.
    """
    predict = estimator.predict if hasattr(estimator, "predict") \
        else estimator
    space = system.space
    coords = system.coords_many(net.states).T  # (N, m)
    worst = 0.0
    worst_idx = 0
    for lo in range(0, coords.shape[0], block):
        hi = min(lo + block, coords.shape[0])
        pred = np.asarray(predict(coords[lo:hi]))
        if pred.shape != (hi - lo, space.dim):
            raise ValueError(
                f"estimator returned shape {pred.shape}, expected "
                f"{(hi - lo, space.dim)}")
        diff = pred.T - net.states[:, lo:hi]
        errs = np.sqrt(np.einsum("ij,ij->j", diff, space.gram.dot(diff)))
        k = int(np.argmax(errs))
        if errs[k] > worst:
            worst = float(errs[k])
            worst_idx = lo + k
    return worst, worst_idx


# ---------------------------------------------------------------------------
# benchmark driver


@dataclass
class BenchmarkReport:
    """Reference numbers from one oracle run.

    delta_eps maps each requested blur to its worst indistinguishable
    pair distance; wc_errors maps estimator names to their realized
    worst error over the net (a lower bound for their true worst case);
    rad_slices records (state index, members, radius_lb) probes.
    """

    delta_eps: dict
    wc_errors: dict
    rad_slices: list
    net_size: int
    grid_per_dim: int
    net_resolution: float
    slice_tol: float
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "delta_eps": {repr(float(k)): v for k, v in
                          self.delta_eps.items()},
            "wc_errors": dict(self.wc_errors),
            "rad_slices": [
                {"index": int(i), "members": int(c), "radius_lb": r}
                for (i, c, r) in self.rad_slices],
            "net_size": self.net_size,
            "grid_per_dim": self.grid_per_dim,
            "net_resolution": self.net_resolution,
            "slice_tol": self.slice_tol,
            "meta": self.meta,
        }


def run_benchmark(model, system, estimators=None, eps_list=(0.0,),
                  grid_per_dim=None, n_slice_probes=5, seed=0,
                  cache_dir=None):
    """Build a net and evaluate every reference quantity on it.

    ``estimators`` maps names to predict-capable objects (or callables);
    ``eps_list`` are the blur levels for the indistinguishability scan.
    """
    net = manifold_net(model, grid_per_dim=grid_per_dim,
                       cache_dir=cache_dir)
    g = int(net.provenance.get("grid_per_dim", 0))
    probe = 2 * g - 1  # nested refinement: halves the step
    if g and probe ** model.d_y <= _NET_BUDGET \
            and probe ** model.d_y <= 4 * _DEFAULT_MAX_STATES:
        estimate_delta(model, net, probe)
    slice_tol = default_slice_tol(net, system)

    delta = {}
    for eps in sorted(set(float(e) for e in eps_list)):
        delta[eps] = delta_eps_bruteforce(net, system, eps,
                                          eps_slice=slice_tol)

    rng = np.random.default_rng(seed)
    n_states = net.states.shape[1]
    probes = rng.choice(n_states, size=min(n_slice_probes, n_states),
                        replace=False)
    rad_slices = []
    for i in probes:
        w = system.coords(net.states[:, i])
        members, radius = slice_and_radius(net, system, w, slice_tol)
        rad_slices.append((int(i), int(members.size), radius))

    wc = {}
    for name, est in (estimators or {}).items():
        value, idx = wc_error_bruteforce(net, system, est)
        wc[name] = {"worst_error": value, "worst_index": int(idx)}

    return BenchmarkReport(
        delta_eps=delta, wc_errors=wc, rad_slices=rad_slices,
        net_size=n_states,
        grid_per_dim=int(net.provenance.get("grid_per_dim", 0)),
        net_resolution=net.delta, slice_tol=slice_tol,
        meta={"model": model.config_hash, "m": system.m,
              "seed": int(seed)})
