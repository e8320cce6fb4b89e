"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np

SUPPORTED_DIMENSIONS = (1, 2, 3)


def check_positive_scalar(value, name: str, *, allow_inf: bool = False) -> float:
    """Coerce ``value`` to a strictly positive float, raising ValueError otherwise."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if np.isnan(value) or value <= 0.0:
        raise ValueError(f"{name} must be strictly positive, got {value!r}")
    if not allow_inf and np.isinf(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def check_probability(value, name: str) -> float:
    """Coerce ``value`` to a float in the open interval (0, 1)."""
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {value!r}")
    return value


def check_dimension(d, name: str = "d") -> int:
    if d not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"{name} must be one of {SUPPORTED_DIMENSIONS}, got {d!r}")
    return int(d)


def check_locations(locations, name: str = "locations") -> np.ndarray:
    """Validate a set of spatial locations and return it as a float (n, d) array.

    A one-dimensional array of length n is interpreted as n points on the line.
    """
    arr = np.asarray(locations, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array of shape (n, d), got shape {arr.shape}")
    n, d = arr.shape
    if n == 0:
        raise ValueError(f"{name} must contain at least one point")
    check_dimension(d, name=f"{name} dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_targets(targets, d: int, name: str = "targets") -> tuple[np.ndarray, bool]:
    """Validate prediction targets against dimension ``d``.

    Returns the targets as an (m, d) array together with a flag that is True
    when the input was a single point, so callers can return scalars.
    """
    arr = np.asarray(targets, dtype=float)
    single = arr.ndim == 1 and arr.shape == (d,)
    if single:
        arr = arr[np.newaxis, :]
    elif arr.ndim == 1 and d == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"{name} must have shape (m, {d}) or ({d},), got shape {np.shape(targets)}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr, single


def check_observations(z, n: int, name: str = "z") -> np.ndarray:
    """Validate an observation vector of length ``n``."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim != 1:
        arr = arr.reshape(-1) if arr.size == n else arr
    if arr.ndim != 1 or arr.shape[0] != n:
        raise ValueError(f"{name} must be a vector of length {n}, got shape {np.shape(z)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr
