"""Kriging prediction and its mean squared error under model mis-specification.

The kriging predictor of Z at a target s0 from observations z is

    Zhat(s0) = gamma(rho)' Gamma(rho)^{-1} z,

which does not involve the variance.  When the presumed model uses range
``rho`` but the truth has parameters (sigma2_0, rho_0), the error of the
prediction actually incurred is

    E (Zhat - Z(s0))^2 = sigma2_0 * (1 - 2 w' gamma_0 + w' Gamma_0 w),

with w = Gamma(rho)^{-1} gamma(rho) the presumed weights and gamma_0, Gamma_0
evaluated under the truth.  The value the presumed model itself reports is

    sigma2 * (1 - gamma(rho)' Gamma(rho)^{-1} gamma(rho)),

and the two coincide when the presumed model equals the truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import ndtri

from .covariance import (
    MaternParams,
    correlation_cholesky,
    correlation_matrix,
    cross_correlation,
    cross_distances,
    pairwise_distances,
)
from .estimation import profile_sigma2
from .validation import (
    check_locations,
    check_observations,
    check_positive_scalar,
    check_probability,
    check_targets,
)


@dataclass(frozen=True)
class KrigingOutput:
    """Prediction at one target: point value, reported error, and optionally the true error."""

    target: tuple[float, ...]
    z_hat: float
    naive_mspe: float
    true_mspe: float | None = None


def _nonnegative(values: np.ndarray) -> np.ndarray:
    # roundoff can push an exact zero (e.g. at a data site) slightly negative
    return np.maximum(values, 0.0)


class KrigingSolver:
    """Kriging machinery for a fixed design and presumed Matern correlation.

    The correlation matrix of the design is factorized once; predictions,
    weights and error formulas for any number of targets then reuse the
    factor.  Precomputed ``weights`` and ``cross_distances`` keyword arguments
    let Monte Carlo drivers skip repeated geometry and solves.

    Parameters
    ----------
    locations : array-like of shape (n, d) or None
        Design points.  May be None when ``distances`` is given, in which
        case targets must always be described by ``cross_distances``.
    rho, nu : float
        Presumed Matern range and smoothness.
    distances : ndarray of shape (n, n), optional
        Precomputed pairwise distances of the design.
    """

    def __init__(self, locations, rho: float, nu: float, *, distances=None):
        if locations is not None:
            self._locations = check_locations(locations)
        else:
            self._locations = None
        if distances is None:
            distances = pairwise_distances(self._locations)
        self._distances = np.asarray(distances, dtype=float)
        self.n = self._distances.shape[0]
        self.rho = check_positive_scalar(rho, "rho")
        self.nu = check_positive_scalar(nu, "nu")
        self._factor, _ = correlation_cholesky(None, self.rho, self.nu,
                                               distances=self._distances)

    def _resolve_cross(self, targets, cross) -> tuple[np.ndarray, bool]:
        """Cross-distance matrix (n, m) and whether a single target was given."""
        if cross is not None:
            cross = np.asarray(cross, dtype=float)
            if cross.ndim == 1:
                return cross[:, np.newaxis], True
            return cross, False
        if targets is None:
            raise ValueError("either targets or cross_distances must be given")
        if self._locations is None:
            raise ValueError("solver was built from distances only; pass cross_distances")
        t, single = check_targets(targets, self._locations.shape[1])
        return cross_distances(self._locations, t), single

    def weights(self, targets=None, *, cross_distances=None) -> np.ndarray:
        """Kriging weight matrix Gamma^{-1} gamma, one column per target.

        Returns a vector for a single target point.
        """
        cross, single = self._resolve_cross(targets, cross_distances)
        gamma = cross_correlation(None, None, self.rho, self.nu, distances=cross)
        w = cho_solve((self._factor, True), gamma, check_finite=False)
        return w[:, 0] if single else w

    def predict(self, z, targets=None, *, weights=None, cross_distances=None):
        """Kriging predictions w' z at the targets."""
        z = check_observations(z, self.n)
        single = False
        if weights is None:
            cross, single = self._resolve_cross(targets, cross_distances)
            weights = self.weights(cross_distances=cross)
        elif np.ndim(weights) == 1:
            single = True
        w = np.atleast_2d(np.asarray(weights, dtype=float).T).T
        out = w.T @ z
        return float(out[0]) if single else out

    def naive_mspe(self, targets=None, sigma2: float = 1.0, *, weights=None,
                   cross_distances=None):
        """Error the presumed model reports: sigma2 * (1 - gamma' Gamma^{-1} gamma)."""
        sigma2 = check_positive_scalar(sigma2, "sigma2")
        cross, single = self._resolve_cross(targets, cross_distances)
        gamma = cross_correlation(None, None, self.rho, self.nu, distances=cross)
        if weights is None:
            w = cho_solve((self._factor, True), gamma, check_finite=False)
        else:
            w = np.asarray(weights, dtype=float)
            if w.ndim == 1:
                w = w[:, np.newaxis]
        values = sigma2 * _nonnegative(1.0 - np.einsum("ij,ij->j", gamma, w))
        return float(values[0]) if single else values

    def true_mspe(self, targets=None, truth: MaternParams = None, *, weights=None,
                  cross_distances=None):
        """Error actually incurred when the data come from ``truth``.

        Evaluates sigma2_0 * (1 - 2 w' gamma_0 + w' Gamma_0 w) with the
        presumed weights w and the correlation quantities of the true model.
        Reduces to :meth:`naive_mspe` at ``sigma2=truth.sigma2`` when the
        presumed range equals the true one.
        """
        if truth is None:
            raise ValueError("truth parameters are required")
        cross, single = self._resolve_cross(targets, cross_distances)
        if weights is None:
            w = self.weights(cross_distances=cross)
            if w.ndim == 1:
                w = w[:, np.newaxis]
        else:
            w = np.asarray(weights, dtype=float)
            if w.ndim == 1:
                w = w[:, np.newaxis]
        gamma0 = cross_correlation(None, None, truth.rho, truth.nu, distances=cross)
        gamma_matrix0 = correlation_matrix(None, truth.rho, truth.nu,
                                           distances=self._distances)
        middle = np.einsum("ij,ij->j", gamma0, w)
        last = np.einsum("ij,ij->j", w, gamma_matrix0 @ w)
        values = truth.sigma2 * _nonnegative(1.0 - 2.0 * middle + last)
        return float(values[0]) if single else values


def krig_predict(z, locations, targets, rho: float, nu: float):
    """Kriging prediction at the targets from a single factorization."""
    return KrigingSolver(locations, rho, nu).predict(z, targets)


def naive_mspe(locations, targets, rho: float, nu: float, sigma2: float = 1.0):
    """Reported kriging error under the presumed model (one-shot form)."""
    return KrigingSolver(locations, rho, nu).naive_mspe(targets, sigma2)


def true_mspe(locations, targets, rho_used: float, truth: MaternParams):
    """Kriging error actually incurred under ``truth`` when predicting with ``rho_used``."""
    solver = KrigingSolver(locations, rho_used, truth.nu)
    return solver.true_mspe(targets, truth)


def prediction_interval(z_hat, mspe, level: float = 0.95):
    """Central normal prediction interval(s) ``z_hat -/+ q * sqrt(mspe)``."""
    level = check_probability(level, "level")
    z_hat = np.asarray(z_hat, dtype=float)
    mspe = np.asarray(mspe, dtype=float)
    if np.any(mspe < 0.0) or not np.all(np.isfinite(mspe)):
        raise ValueError("mspe must be finite and nonnegative")
    q = float(ndtri(0.5 + level / 2.0))
    half = q * np.sqrt(mspe)
    lower, upper = z_hat - half, z_hat + half
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def kriging_output(z, locations, targets, params: MaternParams,
                   truth: MaternParams | None = None):
    """Bundle predictions, reported errors, and (optionally) true errors.

    Returns a single :class:`KrigingOutput` for one target point and a list
    for a batch of targets.
    """
    x = check_locations(locations)
    t, single = check_targets(targets, x.shape[1])
    solver = KrigingSolver(x, params.rho, params.nu)
    w = solver.weights(t)
    if w.ndim == 1:
        w = w[:, np.newaxis]
    z_hat = np.atleast_1d(solver.predict(z, t, weights=w))
    reported = np.atleast_1d(solver.naive_mspe(t, params.sigma2, weights=w))
    actual = None
    if truth is not None:
        actual = np.atleast_1d(solver.true_mspe(t, truth, weights=w))
    outputs = []
    for j in range(t.shape[0]):
        outputs.append(KrigingOutput(
            target=tuple(float(v) for v in t[j]),
            z_hat=float(z_hat[j]),
            naive_mspe=float(reported[j]),
            true_mspe=None if actual is None else float(actual[j]),
        ))
    return outputs[0] if single else outputs


def variance_ratio_curve(designs, s0, rho_used: float, truth: MaternParams,
                         sigma2_used=None):
    """Ratio of a reported (or idealized) error to the true error along growing designs.

    For each design the true error of predicting at ``s0`` with range
    ``rho_used`` is computed under ``truth``; what is divided by it depends on
    ``sigma2_used``:

    - None: the true error of the optimal predictor (range ``truth.rho``),
      giving the efficiency loss of the mis-specified predictor.  The ratio
      is at least 1 and decreases toward 1 as designs grow, provided the
      presumed model matches the truth on the product sigma2 / rho^(2 nu).
      The plain ratio true/optimal is returned (so values are >= 1).
    - "matched": the reported error at the variance
      truth.sigma2 * (rho_used / truth.rho)^(2 nu), which matches the
      microergodic product of the truth.
    - a positive float: the reported error at that fixed variance.
    - an observation vector (aligned with the largest design, which the
      smaller designs must prefix): the reported error at the profiled
      variance z' Gamma(rho_used)^{-1} z / n of each design.

    Returns a list of ``(n, ratio)`` pairs ordered by design size.
    """
    rho_used = check_positive_scalar(rho_used, "rho_used")
    if not isinstance(truth, MaternParams):
        raise ValueError("truth must be a MaternParams instance")
    prepared = [check_locations(x, name=f"designs[{k}]") for k, x in enumerate(designs)]
    if not prepared:
        raise ValueError("designs must be a nonempty sequence")
    sizes = [x.shape[0] for x in prepared]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("designs must have strictly increasing sizes")
    d = prepared[0].shape[1]
    if any(x.shape[1] != d for x in prepared):
        raise ValueError("designs must share one dimension")
    point, _ = check_targets(s0, d, name="s0")
    if point.shape[0] != 1:
        raise ValueError("s0 must be a single point")

    profile_z = None
    mode = "reported"
    if sigma2_used is None:
        mode = "optimal"
    elif isinstance(sigma2_used, str):
        if sigma2_used != "matched":
            raise ValueError(f"unknown sigma2_used option {sigma2_used!r}")
        sigma2_used = truth.sigma2 * (rho_used / truth.rho) ** (2.0 * truth.nu)
    elif np.ndim(sigma2_used) == 1:
        profile_z = check_observations(sigma2_used, sizes[-1], name="sigma2_used")
        for k, x in enumerate(prepared[:-1]):
            if not np.array_equal(x, prepared[-1][: sizes[k]]):
                raise ValueError("profiled variances require prefix-nested designs")
    else:
        sigma2_used = check_positive_scalar(sigma2_used, "sigma2_used")

    curve = []
    for x in prepared:
        gaps = np.linalg.norm(x - point[0], axis=1)
        if gaps.min() == 0.0:
            raise ValueError("s0 must not belong to any design")
        solver = KrigingSolver(x, rho_used, truth.nu)
        actual = solver.true_mspe(point[0], truth)
        if actual <= 0.0:
            raise ValueError("true error vanished; s0 is degenerate for this design")
        if mode == "optimal":
            optimal = KrigingSolver(x, truth.rho, truth.nu).naive_mspe(point[0], truth.sigma2)
            ratio = actual / optimal
        else:
            if profile_z is not None:
                s2 = profile_sigma2(profile_z[: x.shape[0]], x, rho_used, truth.nu)
            else:
                s2 = sigma2_used
            ratio = solver.naive_mspe(point[0], s2) / actual
        curve.append((x.shape[0], float(ratio)))
    return curve
