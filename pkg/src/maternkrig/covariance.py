"""Matern correlation kernels, spectral densities, tapering, and design matrices.

The Matern correlation with range ``rho > 0`` and smoothness ``nu > 0`` is

    K(h) = (h / rho)^nu / (Gamma(nu) 2^(nu - 1)) * BesselK_nu(h / rho),

with K(0) = 1.  Half-integer smoothness values 0.5, 1.5 and 2.5 admit the
closed forms

    nu = 0.5:  exp(-t)
    nu = 1.5:  (1 + t) exp(-t)
    nu = 2.5:  (1 + t + t^2 / 3) exp(-t)

where t = h / rho.  The matching spectral density in dimension ``d`` is

    f(w) = Gamma(nu + d/2) / (pi^(d/2) Gamma(nu))
           * rho^(-2 nu) * (rho^(-2) + |w|^2)^(-(nu + d/2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import gamma as _gamma_function
from scipy.special import kve

from .exceptions import ConvergenceError, FactorizationError
from .validation import (
    check_dimension,
    check_locations,
    check_positive_scalar,
    check_probability,
    check_targets,
)

# exp(-t) underflows to zero near t = 745; past this scaled distance the
# correlation is far below double-precision resolution, so we return 0
# instead of risking overflow in the Bessel factor.
SCALED_DISTANCE_CUTOFF = 705.0

CLOSED_FORM_SMOOTHNESS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class MaternParams:
    """Parameters of a Matern covariance: variance ``sigma2``, range ``rho``, smoothness ``nu``."""

    sigma2: float
    rho: float
    nu: float

    def __post_init__(self):
        object.__setattr__(self, "sigma2", check_positive_scalar(self.sigma2, "sigma2"))
        object.__setattr__(self, "rho", check_positive_scalar(self.rho, "rho"))
        object.__setattr__(self, "nu", check_positive_scalar(self.nu, "nu"))


def _closed_form(t: np.ndarray, nu: float) -> np.ndarray:
    if nu == 0.5:
        return np.exp(-t)
    if nu == 1.5:
        return (1.0 + t) * np.exp(-t)
    if nu == 2.5:
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    raise ValueError(f"no closed form for nu={nu!r}; available: {CLOSED_FORM_SMOOTHNESS}")


def _bessel_form(t: np.ndarray, nu: float) -> np.ndarray:
    out = np.ones_like(t)
    pos = t > 0.0
    if np.any(pos):
        tp = t[pos]
        # kve is the exponentially scaled Bessel function, so multiply the
        # analytic prefactor by exp(-t) to undo the scaling without overflow.
        log_pref = (1.0 - nu) * np.log(2.0) - np.log(_gamma_function(nu))
        vals = np.exp(log_pref + nu * np.log(tp) - tp) * kve(nu, tp)
        if not np.all(np.isfinite(vals)):
            raise ConvergenceError(
                f"Bessel evaluation failed for nu={nu!r}; scaled distances out of range"
            )
        out[pos] = vals
    return out


def matern_correlation(h, rho: float, nu: float, method: str = "auto"):
    """Evaluate the Matern correlation at distances ``h``.

    Parameters
    ----------
    h : float or ndarray
        Nonnegative distances.
    rho : float
        Range parameter, strictly positive.
    nu : float
        Smoothness parameter, strictly positive.
    method : {"auto", "closed", "bessel"}
        "closed" uses the half-integer closed forms (nu in {0.5, 1.5, 2.5}),
        "bessel" uses the modified Bessel function of the second kind, and
        "auto" picks the closed form when one exists.

    Returns
    -------
    float or ndarray
        Correlation values in [0, 1], matching the shape of ``h``.
    """
    rho = check_positive_scalar(rho, "rho")
    nu = check_positive_scalar(nu, "nu")
    arr = np.asarray(h, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("distances must be finite and nonnegative")
    t = arr / rho
    clipped = t > SCALED_DISTANCE_CUTOFF
    t = np.where(clipped, 0.0, t)
    if method == "auto":
        method = "closed" if nu in CLOSED_FORM_SMOOTHNESS else "bessel"
    if method == "closed":
        out = _closed_form(t, nu)
    elif method == "bessel":
        out = _bessel_form(t, nu)
    else:
        raise ValueError(f"method must be 'auto', 'closed' or 'bessel', got {method!r}")
    out = np.where(clipped, 0.0, out)
    if np.isscalar(h) or np.ndim(h) == 0:
        return float(out)
    return out


def matern_spectral_density(omega_norm, rho: float, nu: float, d: int):
    """Spectral density of the Matern correlation in dimension ``d``.

    Parameters
    ----------
    omega_norm : float or ndarray
        Euclidean norm of the frequency, nonnegative.
    rho, nu : float
        Range and smoothness, strictly positive.
    d : int
        Spatial dimension, one of 1, 2, 3.

    Returns
    -------
    float or ndarray
        Strictly positive density values.
    """
    rho = check_positive_scalar(rho, "rho")
    nu = check_positive_scalar(nu, "nu")
    d = check_dimension(d)
    w = np.asarray(omega_norm, dtype=float)
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("omega_norm must be finite and nonnegative")
    const = _gamma_function(nu + d / 2.0) / (np.pi ** (d / 2.0) * _gamma_function(nu))
    out = const * rho ** (-2.0 * nu) * (rho ** -2.0 + w * w) ** -(nu + d / 2.0)
    if np.isscalar(omega_norm) or np.ndim(omega_norm) == 0:
        return float(out)
    return out


def taper_correlation(h, taper_range: float):
    """Wendland taper (1 - h/g)_+^4 (4 h/g + 1) with support radius ``taper_range``.

    The taper equals 1 at h = 0, vanishes for h >= taper_range, and is a valid
    correlation in up to three dimensions.  ``taper_range = inf`` gives the
    identity taper (all ones).
    """
    g = check_positive_scalar(taper_range, "taper_range", allow_inf=True)
    arr = np.asarray(h, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("distances must be finite and nonnegative")
    t = arr / g if np.isfinite(g) else np.zeros_like(arr)
    base = np.maximum(1.0 - t, 0.0)
    out = base ** 4 * (4.0 * t + 1.0)
    if np.isscalar(h) or np.ndim(h) == 0:
        return float(out)
    return out


def pairwise_distances(locations) -> np.ndarray:
    """Dense symmetric matrix of Euclidean distances between ``locations``."""
    x = check_locations(locations)
    if x.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(x))


def cross_distances(locations, targets) -> np.ndarray:
    """Matrix of distances from each of n ``locations`` to each of m ``targets``."""
    x = check_locations(locations)
    t, _ = check_targets(targets, x.shape[1])
    return cdist(x, t)


def correlation_matrix(locations, rho: float, nu: float, *, distances=None) -> np.ndarray:
    """Matern correlation matrix of a design.

    Parameters
    ----------
    locations : array-like of shape (n, d)
        Design points.  Ignored when ``distances`` is supplied.
    rho, nu : float
        Range and smoothness.
    distances : ndarray of shape (n, n), optional
        Precomputed pairwise distances, reused across calls on a fixed design.

    Returns
    -------
    ndarray of shape (n, n)
        Symmetric matrix with unit diagonal.
    """
    if distances is None:
        distances = pairwise_distances(locations)
        n = distances.shape[0]
        if n > 1:
            off = distances[np.triu_indices(n, k=1)]
            if off.min() == 0.0:
                raise ValueError("locations must be pairwise distinct")
    gamma = matern_correlation(distances, rho, nu)
    gamma = np.asarray(gamma, dtype=float)
    np.fill_diagonal(gamma, 1.0)
    return gamma


def cross_correlation(locations, targets, rho: float, nu: float, *, distances=None) -> np.ndarray:
    """Matern correlations between design ``locations`` and prediction ``targets``.

    Returns a vector of length n for a single target and an (n, m) matrix for
    m targets.  ``distances`` may carry a precomputed (n, m) cross-distance
    matrix, in which case ``locations`` and ``targets`` are not touched.
    """
    if distances is None:
        distances = cross_distances(locations, targets)
        x = check_locations(locations)
        _, single = check_targets(targets, x.shape[1])
    else:
        distances = np.asarray(distances, dtype=float)
        single = False
    out = np.asarray(matern_correlation(distances, rho, nu), dtype=float)
    if single:
        return out[:, 0]
    return out


def correlation_cholesky(locations, rho: float, nu: float, *, distances=None,
                         taper_range: float | None = None):
    """Lower Cholesky factor and log-determinant of a (possibly tapered) correlation matrix.

    Parameters
    ----------
    locations : array-like or None
        Design points; may be None when ``distances`` is given.
    rho, nu : float
        Matern parameters.
    distances : ndarray, optional
        Precomputed pairwise distance matrix.
    taper_range : float, optional
        When given, the correlation is multiplied elementwise by the Wendland
        taper before factorization.

    Returns
    -------
    (L, logdet) : (ndarray, float)
        ``L`` lower triangular with ``L @ L.T`` equal to the matrix, and the
        log-determinant ``2 * sum(log(diag(L)))``.

    Raises
    ------
    FactorizationError
        If the matrix is not numerically positive definite.
    """
    if distances is None:
        distances = pairwise_distances(locations)
    gamma = correlation_matrix(None, rho, nu, distances=distances)
    if taper_range is not None:
        gamma = gamma * taper_correlation(distances, taper_range)
        np.fill_diagonal(gamma, 1.0)
    try:
        factor = cholesky(gamma, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"correlation matrix (n={gamma.shape[0]}, rho={rho:g}, nu={nu:g}) "
            f"is not positive definite: {exc}"
        ) from exc
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(factor))))
    return factor, logdet


def effective_range_to_rho(effective_range: float, nu: float, level: float = 0.05) -> float:
    """Solve for the range ``rho`` at which correlation at the given distance equals ``level``.

    The Matern correlation is strictly increasing in rho at fixed positive
    distance, so bisection on log(rho) converges to the unique root.  The
    result satisfies the defining equation to relative accuracy 1e-12.
    """
    er = check_positive_scalar(effective_range, "effective_range")
    nu = check_positive_scalar(nu, "nu")
    level = check_probability(level, "level")

    def corr_at(rho):
        return matern_correlation(er, rho, nu)

    lo = hi = er
    for _ in range(200):
        if corr_at(lo) <= level:
            break
        lo /= 8.0
    else:
        raise ConvergenceError("failed to bracket effective range from below")
    for _ in range(200):
        if corr_at(hi) >= level:
            break
        hi *= 8.0
    else:
        raise ConvergenceError("failed to bracket effective range from above")
    while hi - lo > 1e-12 * lo:
        mid = np.sqrt(lo * hi)
        if corr_at(mid) < level:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))
