"""Small input-validation helpers used by the public entry points."""

import numpy as np

from .errors import DimensionMismatch, InvalidInput


def as_vector(x, name="x", size=None):
    """Coerce to a 1-D float64 array, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidInput(f"{name} must be one-dimensional, got shape {v.shape}")
    if size is not None and v.shape[0] != size:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {size}")
    return v


def as_matrix(x, name="x", shape=None):
    """Coerce to a 2-D float64 array, optionally checking its shape."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be two-dimensional, got shape {a.shape}")
    if shape is not None and a.shape != tuple(shape):
        raise DimensionMismatch(f"{name} has shape {a.shape}, expected {tuple(shape)}")
    return a


def check_positive(value, name):
    if not value > 0:
        raise InvalidInput(f"{name} must be positive, got {value!r}")
    return value


def check_in_range(value, lo, hi, name, *, open_ends=True):
    ok = lo < value < hi if open_ends else lo <= value <= hi
    if not ok:
        raise InvalidInput(f"{name} must lie in ({lo}, {hi}), got {value!r}")
    return value
