"""Reproducible Monte Carlo study of interval coverage and prediction error.

The study simulates mean-zero Gaussian fields with Matern correlation on a
jittered square grid, fits the microergodic ratio c = sigma2 / rho^(2 nu) by
profile likelihood (and with the range held at fixed multiples of the truth),
and scores

- empirical coverage of the 95% intervals for c,
- the percent increase in average prediction error over a held-out grid
  relative to the optimal predictor, and
- empirical coverage of the pointwise 95% prediction intervals.

Reproducibility contract: all randomness flows through
``numpy.random.SeedSequence(master_seed, spawn_key=(index,))`` streams, where
index 0 draws the design and index r + 1 drives replicate r.  Replicates are
partitioned into contiguous chunks across worker processes and aggregated in
replicate order, so reports are byte-identical for any worker count.
"""

from __future__ import annotations

import json
import math
import numbers
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from hashlib import sha256
from itertools import repeat

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import ndtri

from .covariance import MaternParams, correlation_cholesky, effective_range_to_rho
from .estimation import FitConfig, FixedRhoEstimator, ProfileOptimizer
from .exceptions import (
    ConvergenceError,
    DegenerateDataError,
    ExperimentError,
    FactorizationError,
)
from .prediction import KrigingSolver
from .validation import check_locations, check_observations, check_probability

DESIGN_STREAM_INDEX = 0
REPLICATE_STREAM_OFFSET = 1


@dataclass(frozen=True)
class RngStream:
    """A named, independent random stream derived from one master seed.

    Streams with distinct indices are statistically independent, and the
    generator is rebuilt from scratch on every call, so a stream always
    replays the same draws.
    """

    master_seed: int
    index: int

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.index,))
        return np.random.default_rng(seq)


def design_stream(master_seed: int) -> RngStream:
    """Stream that draws the observation design."""
    return RngStream(master_seed, DESIGN_STREAM_INDEX)


def replicate_stream(master_seed: int, replicate: int) -> RngStream:
    """Stream that drives Monte Carlo replicate ``replicate`` (0-based)."""
    if replicate < 0:
        raise ValueError("replicate must be nonnegative")
    return RngStream(master_seed, REPLICATE_STREAM_OFFSET + replicate)


_CONFIG_SCALARS = {
    "replicates": int,
    "master_seed": int,
    "grid_side": int,
    "prediction_grid_side": int,
    "grid_step": float,
    "grid_origin": float,
    "perturb_half_width": float,
    "ci_level": float,
    "rho_bounds_multiplier": float,
    "predict": bool,
    "redraw_design_per_replicate": bool,
}
_CONFIG_LISTS = {
    "nu_list": float,
    "effective_ranges": float,
    "sample_sizes": int,
    "fixed_rho_multipliers": float,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one simulation study.

    The defaults reproduce the full study protocol: smoothness 0.5 and 1.5
    crossed with effective ranges 0.1, 0.3 and 1 (the distance at which the
    correlation drops to 0.05), nested samples of 400, 900 and 1600 sites
    drawn from a jittered 67 x 67 grid, a 50 x 50 held-out prediction grid,
    and ranges held at multiples 0.2, 0.5, 1, 2 and 5 of the truth alongside
    the profile-likelihood fit.

    ``predict=False`` skips all prediction metrics (faster, less memory).
    ``redraw_design_per_replicate=True`` redraws the design within every
    replicate instead of fixing one design per seed; it is off by default so
    that prediction-error summaries are deterministic given the design.
    """

    nu_list: tuple = (0.5, 1.5)
    effective_ranges: tuple = (0.1, 0.3, 1.0)
    sample_sizes: tuple = (400, 900, 1600)
    replicates: int = 1000
    fixed_rho_multipliers: tuple = (0.2, 0.5, 1.0, 2.0, 5.0)
    master_seed: int = 0
    grid_side: int = 67
    grid_step: float = 0.015
    grid_origin: float = 0.005
    perturb_half_width: float = 0.005
    prediction_grid_side: int = 50
    ci_level: float = 0.95
    rho_bounds_multiplier: float = 15.0
    predict: bool = True
    redraw_design_per_replicate: bool = False

    def __post_init__(self):
        for name, kind in _CONFIG_LISTS.items():
            raw = getattr(self, name)
            if isinstance(raw, (str, bytes)) or not hasattr(raw, "__iter__"):
                raise ValueError(f"{name} must be a sequence")
            values = tuple(kind(v) for v in raw)
            if not values:
                raise ValueError(f"{name} must be nonempty")
            object.__setattr__(self, name, values)
        for name in ("nu_list", "effective_ranges", "fixed_rho_multipliers"):
            if any(v <= 0 or not np.isfinite(v) for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be positive and finite")
        sizes = self.sample_sizes
        if any(s < 1 for s in sizes):
            raise ValueError("sample_sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("sample_sizes must be strictly increasing")
        if not isinstance(self.replicates, numbers.Integral) or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")
        object.__setattr__(self, "replicates", int(self.replicates))
        if (not isinstance(self.master_seed, numbers.Integral)
                or not 0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must be an integer in [0, 2**64)")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        for name in ("grid_side", "prediction_grid_side"):
            v = getattr(self, name)
            if not isinstance(v, numbers.Integral) or v < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(v))
        if sizes[-1] > self.grid_side ** 2:
            raise ValueError("largest sample size exceeds the number of grid sites")
        for name in ("grid_step", "rho_bounds_multiplier"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, v)
        origin = float(self.grid_origin)
        if not np.isfinite(origin) or origin < 0:
            raise ValueError("grid_origin must be finite and nonnegative")
        object.__setattr__(self, "grid_origin", origin)
        w = float(self.perturb_half_width)
        if not 0 <= w < self.grid_step / 2:
            raise ValueError("perturb_half_width must lie in [0, grid_step / 2)")
        object.__setattr__(self, "perturb_half_width", w)
        object.__setattr__(self, "ci_level", check_probability(self.ci_level, "ci_level"))
        object.__setattr__(self, "predict", bool(self.predict))
        object.__setattr__(self, "redraw_design_per_replicate",
                           bool(self.redraw_design_per_replicate))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config from a plain dict (e.g. parsed JSON), rejecting unknown keys."""
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        known = set(_CONFIG_SCALARS) | set(_CONFIG_LISTS)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = tuple(value) if key in _CONFIG_LISTS else value
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in _CONFIG_LISTS:
            out[name] = list(getattr(self, name))
        for name in _CONFIG_SCALARS:
            out[name] = getattr(self, name)
        return out

    def hash(self) -> str:
        digest = sha256(json.dumps(self.to_dict(), sort_keys=True).encode())
        return digest.hexdigest()


def perturbed_grid(config: ExperimentConfig, stream: RngStream) -> np.ndarray:
    """Square grid of candidate sites jittered by uniform offsets.

    Sites are ``grid_origin + grid_step * i`` on each axis, each coordinate
    shifted by an independent Uniform(-w, w) draw with w =
    ``perturb_half_width``.  Since w < step / 2, distinct sites stay at least
    ``step - 2 w`` apart.
    """
    return _draw_perturbed_grid(config, stream.generator())


def _draw_perturbed_grid(config: ExperimentConfig, g: np.random.Generator) -> np.ndarray:
    axis = config.grid_origin + config.grid_step * np.arange(config.grid_side)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    base = np.column_stack([xx.ravel(), yy.ravel()])
    if config.perturb_half_width > 0:
        base = base + g.uniform(-config.perturb_half_width, config.perturb_half_width,
                                size=base.shape)
    return base


def nested_subsets(design, sizes, stream: RngStream) -> list:
    """Nested random subsets of a design, smaller ones prefixes of larger ones."""
    return _draw_nested_subsets(check_locations(design), tuple(sizes), stream.generator())


def _draw_nested_subsets(design: np.ndarray, sizes: tuple, g: np.random.Generator) -> list:
    if any(s < 1 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be positive and strictly increasing")
    if sizes[-1] > design.shape[0]:
        raise ValueError("largest size exceeds the design")
    idx = g.choice(design.shape[0], size=sizes[-1], replace=False)
    return [design[idx[:s]] for s in sizes]


def prediction_grid(config: ExperimentConfig) -> np.ndarray:
    """Held-out grid of cell midpoints (i + 0.5) / side on the unit square."""
    side = config.prediction_grid_side
    axis = (np.arange(side) + 0.5) / side
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def simulate_gp(locations, params: MaternParams, deviates, *, distances=None) -> np.ndarray:
    """Exact draw of a mean-zero Matern field from standard normal deviates.

    Computes sqrt(sigma2) * L @ deviates with L the Cholesky factor of the
    correlation matrix, so a fixed deviate vector yields fields that are
    coupled across parameter settings.
    """
    if distances is None:
        locations = check_locations(locations)
        distances = squareform(pdist(locations)) if locations.shape[0] > 1 else np.zeros((1, 1))
    factor, _ = correlation_cholesky(None, params.rho, params.nu, distances=distances)
    dev = check_observations(deviates, distances.shape[0], name="deviates")
    return math.sqrt(params.sigma2) * (factor @ dev)


# ---------------------------------------------------------------------------
# experiment driver


@dataclass(frozen=True)
class CellResult:
    """Aggregated metrics for one (nu, effective range, n, estimator) cell."""

    nu: float
    effective_range: float
    rho0: float
    n: int
    estimator: str
    replicates_used: int
    coverage_pct: float
    mean_c_hat: float
    relative_bias_c: float
    boundary_hits: int
    pct_mspe_increase: float | None = None
    prediction_interval_coverage_pct: float | None = None

    def metrics(self) -> list:
        rows = [
            ("coverage_pct", self.coverage_pct),
            ("mean_c_hat", self.mean_c_hat),
            ("relative_bias_c", self.relative_bias_c),
        ]
        if self.pct_mspe_increase is not None:
            rows.append(("pct_mspe_increase", self.pct_mspe_increase))
        if self.prediction_interval_coverage_pct is not None:
            rows.append(("prediction_interval_coverage_pct",
                         self.prediction_interval_coverage_pct))
        return rows


@dataclass
class ExperimentReport:
    """Results of :func:`run_experiment`, serializable to CSV and JSON."""

    config: ExperimentConfig
    cells: list
    failures: list = field(default_factory=list)
    failed_replicates: int = 0

    CSV_HEADER = "nu,effective_range,rho0,n,estimator,metric,value,replicates,seed"

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        seed = self.config.master_seed
        for cell in self.cells:
            for metric, value in cell.metrics():
                lines.append(
                    f"{cell.nu:g},{cell.effective_range:g},{cell.rho0!r},{cell.n},"
                    f"{cell.estimator},{metric},{float(value)!r},"
                    f"{cell.replicates_used},{seed}"
                )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "format": 1,
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "cells": [asdict(cell) for cell in self.cells],
            "failures": self.failures,
            "failed_replicates": self.failed_replicates,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        payload = json.loads(text)
        config = ExperimentConfig.from_dict(payload["config"])
        cells = [CellResult(**cell) for cell in payload["cells"]]
        return cls(config=config, cells=cells, failures=payload.get("failures", []),
                   failed_replicates=payload.get("failed_replicates", 0))

    def cell(self, nu: float, effective_range: float, n: int, estimator: str) -> CellResult:
        """Look up one cell; raises KeyError when absent."""
        for c in self.cells:
            if (c.nu == nu and c.effective_range == effective_range
                    and c.n == n and c.estimator == estimator):
                return c
        raise KeyError((nu, effective_range, n, estimator))

    def _table(self, metric: str, title: str) -> str:
        cols = [(nu, er) for nu in self.config.nu_list
                for er in self.config.effective_ranges]
        labels = ["mle"] + [_estimator_label(m)
                            for m in self.config.fixed_rho_multipliers]
        head = f"{'estimator':<12} {'n':>6}"
        for nu, er in cols:
            head += f"  {f'nu={nu:g},er={er:g}':>14}"
        lines = [title, head]
        for label in labels:
            for n in self.config.sample_sizes:
                row = f"{label:<12} {n:>6}"
                for nu, er in cols:
                    try:
                        value = getattr(self.cell(nu, er, n, label), metric)
                    except KeyError:
                        value = None
                    row += f"  {'-':>14}" if value is None else f"  {value:>14.1f}"
                lines.append(row)
        return "\n".join(lines)

    def coverage_table(self) -> str:
        return self._table("coverage_pct",
                           f"coverage of {self.config.ci_level:.0%} intervals "
                           f"for c (pct), {self.config.replicates} replicates")

    def mspe_table(self) -> str:
        if not self.config.predict:
            return "prediction metrics disabled (predict=false)"
        return self._table("pct_mspe_increase",
                           "percent increase in average prediction error "
                           "over the optimal predictor")

    def summary(self) -> str:
        parts = [self.coverage_table(), "", self.mspe_table()]
        if self.failed_replicates:
            parts.append("")
            parts.append(f"excluded replicates with failures: {self.failed_replicates}")
        return "\n".join(parts)


def _estimator_label(multiplier=None) -> str:
    return "mle" if multiplier is None else f"fixed_{multiplier:g}"


@dataclass
class _Plan:
    """Design geometry shared by every replicate of a run."""

    observations: np.ndarray
    prediction: np.ndarray
    dist_union: np.ndarray
    n_max: int
    n_union: int

    def obs_block(self, n: int) -> np.ndarray:
        return self.dist_union[:n, :n]

    def cross_block(self, n: int) -> np.ndarray:
        return self.dist_union[:n, self.n_max:]


def _build_plan(config: ExperimentConfig, g=None) -> _Plan:
    if g is None:
        g = design_stream(config.master_seed).generator()
    design = _draw_perturbed_grid(config, g)
    n_max = max(config.sample_sizes)
    idx = g.choice(design.shape[0], size=n_max, replace=False)
    observations = design[idx]
    if config.predict:
        prediction = prediction_grid(config)
        union = np.vstack([observations, prediction])
    else:
        prediction = None
        union = observations
    dist_union = squareform(pdist(union)) if union.shape[0] > 1 else np.zeros((1, 1))
    return _Plan(observations, prediction, dist_union, n_max, union.shape[0])


@dataclass
class _CellSample:
    """Per-replicate outcome of one estimator in one cell."""

    c_hat: float
    covered: bool
    at_boundary: bool
    rho_hat: float
    actual_avg: float | None = None
    opt_avg: float | None = None
    pi_hits: int | None = None
    pi_total: int | None = None


class _SettingContext:
    """Factorizations reused by every replicate of one (nu, effective range) setting."""

    def __init__(self, plan: _Plan, config: ExperimentConfig, nu: float, rho0: float,
                 *, deterministic_prediction: bool = False):
        self.nu = nu
        self.rho0 = rho0
        self.c0 = 1.0 / rho0 ** (2.0 * nu)
        self.L_union, _ = correlation_cholesky(None, rho0, nu, distances=plan.dist_union)
        eps = float(np.finfo(float).eps)
        self.optimizers = {}
        self.fixed = {}
        self.fixed_pred = {}
        self.opt_avg = {}
        self.fixed_actual = {}
        truth = MaternParams(1.0, rho0, nu)
        for n in config.sample_sizes:
            dist = plan.obs_block(n)
            fit_cfg = FitConfig(nu=nu, rho_lower=eps,
                                rho_upper=config.rho_bounds_multiplier * rho0)
            self.optimizers[n] = ProfileOptimizer(None, fit_cfg, distances=dist)
            for mult in config.fixed_rho_multipliers:
                self.fixed[(n, mult)] = FixedRhoEstimator(None, mult * rho0, nu,
                                                          distances=dist)
            if config.predict:
                cross = plan.cross_block(n)
                for mult in config.fixed_rho_multipliers:
                    solver = KrigingSolver(None, mult * rho0, nu, distances=dist)
                    w = solver.weights(cross_distances=cross)
                    unit_var = solver.naive_mspe(None, 1.0, weights=w,
                                                 cross_distances=cross)
                    self.fixed_pred[(n, mult)] = (w, unit_var)
                    if deterministic_prediction:
                        actual = solver.true_mspe(None, truth, weights=w,
                                                  cross_distances=cross)
                        self.fixed_actual[(n, mult)] = float(np.mean(actual))
                if deterministic_prediction:
                    solver0 = KrigingSolver(None, rho0, nu, distances=dist)
                    w0 = solver0.weights(cross_distances=cross)
                    v0 = solver0.naive_mspe(None, 1.0, weights=w0, cross_distances=cross)
                    self.opt_avg[n] = float(np.mean(v0))


def _dump_field(directory: str, nu: float, er: float, rep: int, union: np.ndarray,
                z: np.ndarray) -> None:
    path = os.path.join(directory, f"field_nu{nu:g}_er{er:g}_rep{rep:05d}.csv")
    lines = ["x,y,z"]
    for row, value in zip(union, z):
        coords = ",".join(repr(float(v)) for v in row)
        lines.append(f"{coords},{float(value)!r}")
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def _run_replicate(samples, failures, config: ExperimentConfig, plan: _Plan,
                   ctx: _SettingContext, nu: float, er: float, rep: int,
                   deviates: np.ndarray, quantile: float, field_dump,
                   per_replicate_prediction: bool) -> None:
    z_union = ctx.L_union @ deviates
    if field_dump:
        union = plan.observations if plan.prediction is None \
            else np.vstack([plan.observations, plan.prediction])
        _dump_field(field_dump, nu, er, rep, union, z_union)
    z_obs = z_union[:plan.n_max]
    z_pred = z_union[plan.n_max:] if config.predict else None
    truth = MaternParams(1.0, ctx.rho0, nu)

    for n in config.sample_sizes:
        z_n = z_obs[:n]
        # profile-likelihood estimator
        key = (nu, er, n, "mle")
        try:
            res = ctx.optimizers[n].fit(z_n)
            sample = _CellSample(c_hat=res.c_hat,
                                 covered=res.ci_c[0] <= ctx.c0 <= res.ci_c[1],
                                 at_boundary=res.at_boundary, rho_hat=res.rho_hat)
            if config.predict:
                dist = plan.obs_block(n)
                cross = plan.cross_block(n)
                solver = KrigingSolver(None, res.rho_hat, nu, distances=dist)
                w = solver.weights(cross_distances=cross)
                unit_var = solver.naive_mspe(None, 1.0, weights=w, cross_distances=cross)
                z_hat = w.T @ z_n
                sd = np.sqrt(res.sigma2_hat * unit_var)
                sample.pi_hits = int(np.sum(np.abs(z_pred - z_hat) <= quantile * sd))
                sample.pi_total = int(z_pred.size)
                actual = solver.true_mspe(None, truth, weights=w, cross_distances=cross)
                sample.actual_avg = float(np.mean(actual))
                if per_replicate_prediction:
                    sample.opt_avg = ctx.opt_avg[n]
            samples.append((rep, key, sample))
        except (FactorizationError, ConvergenceError, DegenerateDataError) as exc:
            failures.append({"replicate": rep, "nu": nu, "effective_range": er,
                             "n": n, "estimator": "mle",
                             "error": type(exc).__name__, "message": str(exc)})
        # estimators with the range held fixed
        for mult in config.fixed_rho_multipliers:
            label = _estimator_label(mult)
            key = (nu, er, n, label)
            try:
                res = ctx.fixed[(n, mult)].fit(z_n)
                sample = _CellSample(c_hat=res.c_hat,
                                     covered=res.ci_c[0] <= ctx.c0 <= res.ci_c[1],
                                     at_boundary=False, rho_hat=res.rho_hat)
                if config.predict:
                    w, unit_var = ctx.fixed_pred[(n, mult)]
                    z_hat = w.T @ z_n
                    sd = np.sqrt(res.sigma2_hat * unit_var)
                    sample.pi_hits = int(np.sum(np.abs(z_pred - z_hat) <= quantile * sd))
                    sample.pi_total = int(z_pred.size)
                    if per_replicate_prediction:
                        sample.actual_avg = ctx.fixed_actual[(n, mult)]
                        sample.opt_avg = ctx.opt_avg[n]
                samples.append((rep, key, sample))
            except (FactorizationError, ConvergenceError, DegenerateDataError) as exc:
                failures.append({"replicate": rep, "nu": nu, "effective_range": er,
                                 "n": n, "estimator": label,
                                 "error": type(exc).__name__, "message": str(exc)})


def _replicate_block(config: ExperimentConfig, rep_ids, field_dump=None):
    """Run a contiguous block of replicates; returns (samples, failures)."""
    samples = []
    failures = []
    quantile = float(ndtri(0.5 + config.ci_level / 2.0))
    redraw = config.redraw_design_per_replicate
    plan = None if redraw else _build_plan(config)
    for nu in config.nu_list:
        for er in config.effective_ranges:
            rho0 = effective_range_to_rho(er, nu)
            if not redraw:
                ctx = _SettingContext(plan, config, nu, rho0)
                for rep in rep_ids:
                    g = replicate_stream(config.master_seed, rep).generator()
                    deviates = g.standard_normal(plan.n_union)
                    _run_replicate(samples, failures, config, plan, ctx, nu, er,
                                   rep, deviates, quantile, field_dump, False)
            else:
                for rep in rep_ids:
                    g = replicate_stream(config.master_seed, rep).generator()
                    plan_r = _build_plan(config, g)
                    ctx_r = _SettingContext(plan_r, config, nu, rho0,
                                            deterministic_prediction=config.predict)
                    deviates = g.standard_normal(plan_r.n_union)
                    _run_replicate(samples, failures, config, plan_r, ctx_r, nu, er,
                                   rep, deviates, quantile, field_dump, True)
    return samples, failures


def _chunk_ids(total: int, jobs: int) -> list:
    workers = max(1, min(jobs, total))
    base, extra = divmod(total, workers)
    chunks = []
    start = 0
    for i in range(workers):
        size = base + (1 if i < extra else 0)
        chunks.append(list(range(start, start + size)))
        start += size
    return [c for c in chunks if c]


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   field_dump: str | None = None) -> ExperimentReport:
    """Run the full Monte Carlo study described by ``config``.

    Parameters
    ----------
    config : ExperimentConfig
        Study settings.
    jobs : int
        Number of worker processes.  Replicates are split into contiguous
        chunks, and the aggregation is independent of the split, so any
        value of ``jobs`` yields byte-identical reports.
    field_dump : str, optional
        Directory into which every simulated field is written as CSV,
        one file per (setting, replicate).

    Raises
    ------
    ExperimentError
        When more than 1% of replicates fail numerically.
    """
    if not isinstance(config, ExperimentConfig):
        raise ValueError("config must be an ExperimentConfig")
    jobs = int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be a positive integer")
    if field_dump:
        os.makedirs(field_dump, exist_ok=True)

    total = config.replicates
    if jobs > 1 and total > 1:
        chunks = _chunk_ids(total, jobs)
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_replicate_block, repeat(config), chunks,
                                  repeat(field_dump)))
    else:
        parts = [_replicate_block(config, list(range(total)), field_dump)]

    samples = []
    failures = []
    for part_samples, part_failures in parts:
        samples.extend(part_samples)
        failures.extend(part_failures)
    samples.sort(key=lambda item: (item[0], item[1][0], item[1][1], item[1][2], item[1][3]))
    failures.sort(key=lambda f: (f["replicate"], f["nu"], f["effective_range"],
                                 f["n"], f["estimator"]))

    failed_reps = sorted({f["replicate"] for f in failures})
    if len(failed_reps) > 0.01 * total:
        raise ExperimentError(
            f"{len(failed_reps)} of {total} replicates failed numerically "
            f"(first: {failures[0]['error']}: {failures[0]['message']})"
        )

    by_cell = {}
    for rep, key, sample in samples:
        by_cell.setdefault(key, []).append(sample)

    deterministic = {}
    if config.predict and not config.redraw_design_per_replicate:
        plan = _build_plan(config)
        for nu in config.nu_list:
            for er in config.effective_ranges:
                rho0 = effective_range_to_rho(er, nu)
                deterministic[(nu, er)] = _deterministic_prediction(plan, config, nu, rho0)

    cells = []
    for nu in config.nu_list:
        for er in config.effective_ranges:
            rho0 = effective_range_to_rho(er, nu)
            c0 = 1.0 / rho0 ** (2.0 * nu)
            det = deterministic.get((nu, er))
            for n in config.sample_sizes:
                for mult in [None] + list(config.fixed_rho_multipliers):
                    label = _estimator_label(mult)
                    cell_samples = by_cell.get((nu, er, n, label), [])
                    if not cell_samples:
                        raise ExperimentError(
                            f"every replicate failed in cell nu={nu:g}, "
                            f"effective_range={er:g}, n={n}, estimator={label}"
                        )
                    cells.append(_aggregate_cell(config, nu, er, rho0, c0, n, label,
                                                 mult, cell_samples, det))

    return ExperimentReport(config=config, cells=cells, failures=failures,
                            failed_replicates=len(failed_reps))


def _deterministic_prediction(plan: _Plan, config: ExperimentConfig, nu: float,
                              rho0: float) -> dict:
    """Design-determined prediction-error averages for one setting.

    Returns per sample size the average reported error of the optimal
    predictor and, per fixed multiplier, the average error actually incurred.
    """
    out = {}
    truth = MaternParams(1.0, rho0, nu)
    for n in config.sample_sizes:
        dist = plan.obs_block(n)
        cross = plan.cross_block(n)
        solver0 = KrigingSolver(None, rho0, nu, distances=dist)
        w0 = solver0.weights(cross_distances=cross)
        v0 = solver0.naive_mspe(None, 1.0, weights=w0, cross_distances=cross)
        fixed = {}
        for mult in config.fixed_rho_multipliers:
            solver = KrigingSolver(None, mult * rho0, nu, distances=dist)
            w = solver.weights(cross_distances=cross)
            actual = solver.true_mspe(None, truth, weights=w, cross_distances=cross)
            fixed[mult] = float(np.mean(actual))
        out[n] = (float(np.mean(v0)), fixed)
    return out


def _aggregate_cell(config: ExperimentConfig, nu: float, er: float, rho0: float,
                    c0: float, n: int, label: str, mult, cell_samples, det) -> CellResult:
    c_hats = np.array([s.c_hat for s in cell_samples])
    covered = np.array([s.covered for s in cell_samples])
    boundary = sum(1 for s in cell_samples if s.at_boundary)
    mean_c = float(np.mean(c_hats))
    coverage = 100.0 * float(np.mean(covered))

    pct_mspe = None
    pi_cov = None
    if config.predict:
        hits = sum(s.pi_hits for s in cell_samples)
        total = sum(s.pi_total for s in cell_samples)
        pi_cov = 100.0 * hits / total
        if config.redraw_design_per_replicate:
            # with per-replicate designs, numerator and denominator averages
            # are taken over replicates before forming the ratio
            numer = float(np.mean([s.actual_avg for s in cell_samples]))
            denom = float(np.mean([s.opt_avg for s in cell_samples]))
            pct_mspe = 100.0 * (numer / denom - 1.0)
        else:
            opt_avg, fixed_avgs = det[n]
            if label == "mle":
                numer = float(np.mean([s.actual_avg for s in cell_samples]))
            else:
                numer = fixed_avgs[mult]
            pct_mspe = 100.0 * (numer / opt_avg - 1.0)

    return CellResult(nu=float(nu), effective_range=float(er), rho0=float(rho0),
                      n=int(n), estimator=label, replicates_used=len(cell_samples),
                      coverage_pct=coverage, mean_c_hat=mean_c,
                      relative_bias_c=mean_c / c0 - 1.0, boundary_hits=boundary,
                      pct_mspe_increase=pct_mspe,
                      prediction_interval_coverage_pct=pi_cov)
