"""Posterior summaries, credible bands, DIC and simulation-study metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .inference import PosteriorDraws

LEVELS = (0.80, 0.90, 0.95)
TABLE_GRID = np.array([0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95])
COVERAGE_GRID = np.round(np.arange(1, 20) * 0.05, 10)
EVAL_GRID = np.round(np.arange(1, 100) * 0.01, 10)


def _weights(draws: PosteriorDraws) -> np.ndarray:
    if draws.weights is not None:
        return draws.weights
    return np.full(draws.M, 1.0 / draws.M)


def weighted_quantile(values, weights, q):
    """Inverse-CDF quantile: the smallest value whose cumulative weight reaches ``q``.

    ``values`` is ``(M,)`` or ``(M, J)``; quantiles are taken along axis 0.
    """
    values = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    flat = values.ndim == 1
    v = values[:, None] if flat else values
    order = np.argsort(v, axis=0, kind="stable")
    vs = np.take_along_axis(v, order, axis=0)
    cw = np.cumsum(w[order], axis=0)
    cw /= cw[-1]
    out = np.empty((q.size, v.shape[1]))
    for j in range(v.shape[1]):
        # guard the comparison against rounding in the cumulative sum
        k = np.searchsorted(cw[:, j], q - 1e-12, side="left")
        out[:, j] = vs[np.minimum(k, v.shape[0] - 1), j]
    out = out[:, 0] if flat else out
    return out


@dataclass
class FunctionalSummary:
    point: np.ndarray
    intervals: dict
    values: np.ndarray = field(repr=False)


def _intervals(values, w, levels):
    out = {}
    for lev in levels:
        lo, hi = weighted_quantile(values, w, [(1 - lev) / 2, (1 + lev) / 2])
        out[float(lev)] = (lo, hi)
    return out


def posterior_functional(draws: PosteriorDraws, fn: Callable, levels=LEVELS, batched: bool = False) -> FunctionalSummary:
    """Posterior mean and equal-tailed intervals of ``fn(params)``.

    With ``batched=True`` ``fn`` maps the whole ``(M, d)`` draw matrix to
    ``(M,)`` or ``(M, J)`` values in one call.
    """
    if draws.M < 1:
        raise ValueError("no draws")
    values = np.asarray(fn(draws.draws) if batched else [fn(p) for p in draws.draws], dtype=float)
    if np.any(np.isnan(values)):
        raise ValueError("functional returned NaN")
    w = _weights(draws)
    point = np.tensordot(w, values, axes=(0, 0))
    return FunctionalSummary(point, _intervals(values, w, levels), values)


# -- curves ---------------------------------------------------------------------


@dataclass
class CurveEstimate:
    grid: np.ndarray
    point: np.ndarray
    bands: dict
    band_kind: str = "pointwise"

    def __post_init__(self):
        if self.band_kind not in ("pointwise", "simultaneous"):
            raise ValueError(f"unknown band kind {self.band_kind!r}")

    def to_records(self) -> list[dict]:
        rows = []
        for j, x in enumerate(self.grid):
            row = {"x": float(x), "point": float(self.point[j])}
            for lev, (lo, hi) in sorted(self.bands.items()):
                row[f"lower_{lev:.2f}"] = float(lo[j])
                row[f"upper_{lev:.2f}"] = float(hi[j])
            rows.append(row)
        return rows


def simultaneous_scale(trajectories, weights, point, lower, upper, level) -> float:
    """Smallest ``c >= 1`` such that the band ``point -/+ c * half-widths`` holds
    whole trajectories with total weight at least ``level``.

    Each trajectory is inside the scaled band iff ``c`` is at least its own
    critical factor, so the answer is a weighted quantile of those factors.
    """
    lo_hw = point - lower
    hi_hw = upper - point
    dev = trajectories - point
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(dev > 0, dev / hi_hw, np.where(dev < 0, -dev / lo_hw, 0.0))
    need = np.where(np.isnan(need), np.inf, need)
    crit = need.max(axis=1)
    c = float(weighted_quantile(crit, weights, level)[0])
    return max(1.0, c)


def curve_estimate(values, weights, grid, band_kind: str = "pointwise", levels=LEVELS) -> CurveEstimate:
    """Mean curve and bands from ``(M, J)`` trajectories."""
    values = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    point = w @ values
    pw = _intervals(values, w, levels)
    if band_kind == "pointwise":
        return CurveEstimate(np.asarray(grid), point, pw, "pointwise")
    bands = {}
    for lev, (lo, hi) in pw.items():
        c = simultaneous_scale(values, w, point, lo, hi, lev)
        bands[lev] = (point - c * (point - lo), point + c * (hi - point))
    return CurveEstimate(np.asarray(grid), point, bands, band_kind)


def lambda_curve(draws: PosteriorDraws, model, grid=EVAL_GRID, band_kind: str = "pointwise", levels=LEVELS) -> CurveEstimate:
    """Posterior mean of ``lambda(u)`` on ``grid`` with credible bands."""
    grid = np.asarray(grid, dtype=float)
    values = model.lam(draws.draws, grid)
    return curve_estimate(np.atleast_2d(values), _weights(draws), grid, band_kind, levels)


def tau_curve(draws: PosteriorDraws, model, grid, band_kind: str = "pointwise", levels=LEVELS) -> CurveEstimate:
    """Conditional Kendall's tau on a covariate grid, one trajectory per draw."""
    grid = np.asarray(grid, dtype=float)
    if np.any((grid < 0) | (grid > 1)):
        raise ValueError("covariate grid must lie in [0, 1]")
    values = np.array([model.tau(p, grid) for p in draws.draws])
    return curve_estimate(values, _weights(draws), grid, band_kind, levels)


# -- DIC ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DICRecord:
    dic: float
    effective_dim: float
    mean_deviance: float


def dic(chain: PosteriorDraws, loglik: Callable, thin: int = 1) -> DICRecord:
    """Deviance information criterion with the posterior-mean plug-in."""
    if chain.weights is not None:
        raise ValueError("DIC needs an unweighted chain")
    if thin < 1:
        raise ValueError("thin must be positive")
    draws = chain.draws[::thin]
    dev = np.array([-2.0 * loglik(p) for p in draws])
    mean_d = float(dev.mean())
    p_d = mean_d + 2.0 * loglik(draws.mean(axis=0))
    return DICRecord(mean_d + p_d, p_d, mean_d)


# -- simulation studies -------------------------------------------------------------


def _grid_index(grid, sub):
    grid = np.asarray(grid, dtype=float)
    idx = np.array([np.flatnonzero(np.isclose(grid, s, atol=1e-9))[:1] for s in sub], dtype=object)
    if any(len(i) == 0 for i in idx):
        raise ValueError("reporting grid is not contained in the evaluation grid")
    return np.array([int(i[0]) for i in idx])


@dataclass
class StudyReport:
    label: str
    n: int
    S: int
    grid: np.ndarray
    truth: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    rmise: float
    coverage: dict
    wall_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "S": self.S,
            "grid": self.grid.tolist(),
            "truth": self.truth.tolist(),
            "bias": self.bias.tolist(),
            "rmse": self.rmse.tolist(),
            "rmise": self.rmise,
            "coverage": {f"{k:.2f}": v for k, v in sorted(self.coverage.items())},
        }

    def format_table(self) -> str:
        head = f"{self.label}  n={self.n}  S={self.S}"
        lines = [head, f"{'u':>6} {'lambda':>9} {'bias':>9} {'rmse':>9}"]
        for u, t, b, r in zip(self.grid, self.truth, self.bias, self.rmse):
            lines.append(f"{u:6.2f} {t:9.4f} {b:9.4f} {r:9.4f}")
        lines.append(f"RMISE {self.rmise:.4f}")
        cov = "  ".join(f"{k:.2f}: {v:.3f}" for k, v in sorted(self.coverage.items()))
        lines.append(f"coverage  {cov}")
        return "\n".join(lines)


def study_metrics(
    estimates,
    truth,
    grid=EVAL_GRID,
    intervals: Mapping | None = None,
    table_grid=TABLE_GRID,
    coverage_grid=COVERAGE_GRID,
    label: str = "",
    n: int = 0,
    wall_times=None,
) -> StudyReport:
    """Bias/RMSE on ``table_grid``, RMISE over ``grid``, coverage on ``coverage_grid``.

    ``estimates`` is ``(S, J)`` on ``grid``; ``intervals`` maps a nominal
    level to ``(lower, upper)`` arrays of the same shape.
    """
    est = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if est.ndim != 2 or est.shape[1] != grid.size or truth.shape != grid.shape:
        raise ValueError("estimates, truth and grid disagree in shape")
    S = est.shape[0]
    if S < 2:
        raise ValueError("need at least two replicates")
    err = est - truth
    mse = np.mean(err**2, axis=0)
    order = np.argsort(grid, kind="stable")
    rmise = float(np.sqrt(np.trapezoid(mse[order], grid[order])))
    ti = _grid_index(grid, table_grid)
    coverage = {}
    if intervals:
        ci = _grid_index(grid, coverage_grid)
        for lev, (lo, hi) in intervals.items():
            lo, hi = np.asarray(lo)[:, ci], np.asarray(hi)[:, ci]
            hit = (lo <= truth[ci]) & (truth[ci] <= hi)
            coverage[float(lev)] = float(hit.mean())
    return StudyReport(
        label,
        int(n),
        S,
        np.asarray(table_grid, dtype=float),
        truth[ti],
        err[:, ti].mean(axis=0),
        np.sqrt(mse[ti]),
        rmise,
        coverage,
        np.asarray(wall_times if wall_times is not None else np.zeros(0), dtype=float),
    )
