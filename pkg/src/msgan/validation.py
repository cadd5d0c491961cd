"""Input validation helpers.

Thin wrappers around numpy conversion that raise the library's own
exception types, so callers get ``InvalidArgument`` instead of a bare
numpy error deep inside a solver.
"""

import numpy as np

from .exceptions import InvalidArgument


def as_vector(x, name="x", dim=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise InvalidArgument(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def as_configs(q, dim, name="q"):
    """Accept a single configuration ``(n,)`` or a batch ``(..., n)``."""
    arr = np.asarray(q, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise InvalidArgument(f"{name} must have trailing dimension {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name="X", n_cols=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1 and n_cols is not None and arr.shape[0] == n_cols:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise InvalidArgument(f"{name} has {arr.shape[1]} columns, expected {n_cols}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return arr


def check_bounds(lower, upper, name="bounds"):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape:
        raise InvalidArgument(f"{name}: lower/upper shapes differ {lower.shape} vs {upper.shape}")
    if np.any(lower > upper):
        raise InvalidArgument(f"{name}: lower bound exceeds upper bound")
    return lower, upper
