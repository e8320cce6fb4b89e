"""Seeded internal verification suites backing the command-line ``verify``.

Each suite checks an identity or qualitative property of the library against
an independent computation (closed forms, numerical quadrature, brute-force
alternatives).  Suites are deterministic given the seed and report every
violated case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.spatial.distance import pdist

from . import covariance, estimation, prediction, simulation


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def _random_design(g: np.random.Generator, n: int, d: int = 2,
                   min_gap: float = 5e-3) -> np.ndarray:
    """Random design on the unit cube with a minimum pairwise separation.

    In one dimension a jittered grid is used (rejection sampling for a gap
    is hopeless there); in higher dimensions uniform draws are rejected
    until separated.
    """
    if d == 1:
        base = (np.arange(n) + 0.08 + 0.64 * g.uniform(size=n)) / n
        return g.permutation(base)[:, np.newaxis]
    for _ in range(200):
        x = g.uniform(size=(n, d))
        if n == 1 or pdist(x).min() > min_gap:
            return x
    raise RuntimeError("could not draw a well-separated design")


def suite_kernel_closed_forms(seed: int) -> SuiteResult:
    """Closed-form kernels agree with the Bessel evaluation to 1e-10 relative."""
    g = np.random.default_rng([seed, 1])
    failures = []
    cases = 0
    for nu in covariance.CLOSED_FORM_SMOOTHNESS:
        h = g.uniform(1e-6, 50.0, size=400)
        rho = 1.0
        closed = covariance.matern_correlation(h, rho, nu, method="closed")
        bessel = covariance.matern_correlation(h, rho, nu, method="bessel")
        rel = np.abs(closed - bessel) / np.maximum(np.abs(closed), 1e-300)
        cases += h.size
        for i in np.flatnonzero(rel > 1e-10):
            failures.append(f"nu={nu}: h={h[i]!r} closed={closed[i]!r} bessel={bessel[i]!r}")
    return SuiteResult("kernel_closed_forms", cases, failures)


def suite_spectral_density(seed: int) -> SuiteResult:
    """Fourier inversion of the 1-d spectral density reproduces the correlation."""
    failures = []
    cases = 0
    for nu in (0.5, 1.5):
        for rho in (0.3, 1.0):
            for h in (0.1, 0.5, 1.0):
                cases += 1
                integral, _ = quad(
                    lambda w: covariance.matern_spectral_density(w, rho, nu, 1),
                    0.0, np.inf, weight="cos", wvar=h, limit=400)
                inverted = 2.0 * integral
                direct = covariance.matern_correlation(h, rho, nu)
                if abs(inverted - direct) > 1e-6:
                    failures.append(
                        f"nu={nu} rho={rho} h={h}: inverted={inverted!r} direct={direct!r}")
    return SuiteResult("spectral_density", cases, failures)


def suite_ratio_monotonicity(seed: int) -> SuiteResult:
    """The estimated ratio c never increases when the held range increases."""
    g = np.random.default_rng([seed, 2])
    failures = []
    cases = 100
    for case in range(cases):
        n = int(g.integers(5, 40))
        d = int(g.integers(1, 4))
        x = _random_design(g, n, d)
        dist = covariance.pairwise_distances(x)
        z = g.standard_normal(n) * g.uniform(0.5, 2.0)
        nu = float(g.choice([0.5, 1.0, 1.5, 2.5]))
        # cap the range by smoothness so the correlation matrix stays
        # resolvable in double precision; the inequality is exact but a
        # numerically singular solve can report anything
        cap = {0.5: 2.0, 1.0: 1.0, 1.5: 0.6, 2.5: 0.25}[nu]
        r1, r2 = np.sort(np.exp(g.uniform(np.log(0.05), np.log(cap), size=2)))
        if r2 <= r1:
            r2 = 1.0000001 * r1
        c1 = estimation.profile_sigma2(z, None, r1, nu, distances=dist) / r1 ** (2 * nu)
        c2 = estimation.profile_sigma2(z, None, r2, nu, distances=dist) / r2 ** (2 * nu)
        if c2 > c1 * (1.0 + 1e-9):
            failures.append(f"case {case}: nu={nu} rho1={r1!r} rho2={r2!r} "
                            f"c1={c1!r} c2={c2!r}")
    return SuiteResult("ratio_monotonicity", cases, failures)


def suite_mspe_consistency(seed: int) -> SuiteResult:
    """With the range correctly specified, incurred and reported errors coincide."""
    g = np.random.default_rng([seed, 3])
    failures = []
    cases = 100
    for case in range(cases):
        n = int(g.integers(4, 30))
        x = _random_design(g, n, 2)
        s0 = g.uniform(size=2)
        nu = float(g.choice([0.5, 1.5]))
        rho = float(np.exp(g.uniform(np.log(0.05), np.log(0.6 if nu > 1 else 1.0))))
        sigma2 = float(g.uniform(0.3, 3.0))
        truth = covariance.MaternParams(sigma2, rho, nu)
        actual = prediction.true_mspe(x, s0, rho, truth)
        reported = prediction.naive_mspe(x, s0, rho, nu, sigma2)
        if abs(actual - reported) > 1e-10 * sigma2:
            failures.append(f"case {case}: |{actual!r} - {reported!r}| too large")
    return SuiteResult("mspe_consistency", cases, failures)


def suite_kriging_interpolation(seed: int) -> SuiteResult:
    """Kriging reproduces the data at observation sites with zero reported error."""
    g = np.random.default_rng([seed, 4])
    failures = []
    cases = 20
    for case in range(cases):
        n = int(g.integers(5, 40))
        x = _random_design(g, n, 2)
        z = g.standard_normal(n)
        nu = float(g.choice([0.5, 1.5, 2.5]))
        cap = {0.5: 1.0, 1.5: 0.6, 2.5: 0.25}[nu]
        rho = float(np.exp(g.uniform(np.log(0.05), np.log(cap))))
        solver = prediction.KrigingSolver(x, rho, nu)
        z_hat = solver.predict(z, x)
        err = solver.naive_mspe(x, 1.0)
        scale = max(1.0, float(np.max(np.abs(z))))
        if np.max(np.abs(z_hat - z)) > 1e-8 * scale or np.max(err) > 1e-10:
            failures.append(f"case {case}: max dev {np.max(np.abs(z_hat - z))!r}, "
                            f"max reported {np.max(err)!r}")
    return SuiteResult("kriging_interpolation", cases, failures)


def suite_profile_optimality(seed: int) -> SuiteResult:
    """The fitted range beats every point of a fresh random range grid."""
    g = np.random.default_rng([seed, 5])
    failures = []
    cases = 10
    for case in range(cases):
        n = 40
        x = _random_design(g, n, 2)
        dist = covariance.pairwise_distances(x)
        nu = float(g.choice([0.5, 1.5]))
        rho_true = float(np.exp(g.uniform(np.log(0.1), np.log(0.5))))
        dev = g.standard_normal(n)
        z = simulation.simulate_gp(None, covariance.MaternParams(1.0, rho_true, nu),
                                   dev, distances=dist)
        config = estimation.FitConfig(nu=nu, rho_lower=1e-4, rho_upper=10.0)
        res = estimation.fit_mle(z, None, config, distances=dist)
        best = res.loglik
        probes = np.exp(g.uniform(np.log(1e-4), np.log(10.0), size=20))
        for rho in probes:
            other = estimation.profile_loglik(z, None, rho, nu, distances=dist)
            if other > best + 1e-6:
                failures.append(f"case {case}: rho={rho!r} beats fit "
                                f"({other!r} > {best!r})")
    return SuiteResult("profile_optimality", cases, failures)


def suite_simulation_moments(seed: int) -> SuiteResult:
    """Sample covariance of simulated fields matches the target covariance."""
    g = np.random.default_rng([seed, 6])
    n = 16
    x = _random_design(g, n, 2, min_gap=0.05)
    params = covariance.MaternParams(1.3, 0.4, 1.5)
    dist = covariance.pairwise_distances(x)
    target = params.sigma2 * covariance.correlation_matrix(None, params.rho, params.nu,
                                                           distances=dist)
    draws = 4000
    fields = np.empty((draws, n))
    for r in range(draws):
        fields[r] = simulation.simulate_gp(None, params, g.standard_normal(n),
                                           distances=dist)
    sample_cov = fields.T @ fields / draws
    # entrywise Monte Carlo error of a covariance of Gaussians is about
    # sqrt((target_ii * target_jj + target_ij^2) / draws); allow 5 sigma
    bound = 5.0 * np.sqrt((np.outer(np.diag(target), np.diag(target))
                           + target ** 2) / draws)
    bad = np.abs(sample_cov - target) > bound
    failures = []
    for i, j in zip(*np.nonzero(bad)):
        failures.append(f"entry ({i},{j}): sample={sample_cov[i, j]!r} "
                        f"target={target[i, j]!r}")
    return SuiteResult("simulation_moments", n * n, failures)


SUITES = (
    suite_kernel_closed_forms,
    suite_spectral_density,
    suite_ratio_monotonicity,
    suite_mspe_consistency,
    suite_kriging_interpolation,
    suite_profile_optimality,
    suite_simulation_moments,
)


def run_all(seed: int = 0) -> list:
    """Run every verification suite with sub-seeds derived from ``seed``."""
    return [suite(seed) for suite in SUITES]
