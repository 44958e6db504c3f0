"""Input validation helpers.

Small checkers in the spirit of scikit-learn's ``check_array``: coerce to
float ndarray, verify shapes against the owning objects, fail with messages
that name the offending argument.
"""

import numpy as np

from .exceptions import ConfigError


def as_float_array(x, name="array", ndim=None):
    """Coerce ``x`` to a C-contiguous float64 ndarray and optionally pin ndim."""
    arr = np.ascontiguousarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite entries")
    return arr


def check_state(space, v, name="state"):
    """Validate a coefficient vector against a discrete space."""
    arr = as_float_array(v, name=name, ndim=1)
    if arr.shape[0] != space.dim:
        raise ValueError(
            f"{name}: length {arr.shape[0]} does not match space dimension {space.dim}"
        )
    return arr


def check_parameter(y, d_y, box=None, name="y", tol=1e-12):
    """Validate a parameter vector: shape (d_y,) and inside the box."""
    arr = as_float_array(y, name=name, ndim=1)
    if arr.shape[0] != d_y:
        raise ValueError(f"{name}: expected {d_y} components, got {arr.shape[0]}")
    if box is not None:
        lo, hi = box[:, 0], box[:, 1]
        if np.any(arr < lo - tol) or np.any(arr > hi + tol):
            j = int(np.argmax(np.maximum(lo - arr, arr - hi)))
            raise ValueError(
                f"{name}[{j}] = {arr[j]:g} outside the parameter box "
                f"[{lo[j]:g}, {hi[j]:g}]"
            )
    return arr


def check_coords(system, w, name="w"):
    """Validate observation coordinates against a measurement system."""
    arr = as_float_array(w, name=name, ndim=1)
    if arr.shape[0] != system.m:
        raise ValueError(
            f"{name}: expected {system.m} coordinates, got {arr.shape[0]}"
        )
    return arr


def check_basis(space, basis, name="basis"):
    """Validate a (dim, k) column basis matrix; k = 0 is allowed."""
    arr = np.ascontiguousarray(basis, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != space.dim:
        raise ValueError(
            f"{name}: expected shape ({space.dim}, k), got {arr.shape}"
        )
    return arr


def require(condition, message, exc=ConfigError, **kwargs):
    if not condition:
        raise exc(message, **kwargs)
