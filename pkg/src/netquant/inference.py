"""Pointwise Wald intervals and multiplier-bootstrap uniform confidence
bands over quantile grids and policy-index grids.

The uniform critical value is the (1 - alpha) empirical quantile, over B
Rademacher draws, of the supremum across the grid of the standardized
multiplier process |n^{-1/2} sum_i xi_i psi_i(g) / sigma(g)|.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import ArgumentError
from .estimators import (CrossFitNuisance, EstimatorOptions, QuantileEstimate,
                         build_nuisance, np_quantile_from_nuisance)
from .records import Dataset, EstimandKind

MIN_BOOTSTRAP_DRAWS = 200


def z_quantile(alpha: float) -> float:
    """Two-sided normal critical value z_{1 - alpha/2}."""
    if not 0.0 < alpha <= 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1], got {alpha}")
    return float(ndtri(1.0 - alpha / 2.0))


def pointwise_ci(estimate: QuantileEstimate, alpha: float = 0.05) -> tuple[float, float]:
    """Wald interval theta-hat -+ z_{1-alpha/2} sigma-hat / sqrt(n)."""
    if not np.isfinite(estimate.sigma_hat):
        raise ArgumentError("estimate has non-finite sigma_hat")
    half = z_quantile(alpha) * estimate.se
    return estimate.theta_hat - half, estimate.theta_hat + half


def rademacher_multipliers(n: int, B: int, seed: int, gaussian: bool = False) -> np.ndarray:
    """(B, n) matrix of multiplier draws; Rademacher +-1 by default."""
    rng = np.random.default_rng(seed)
    if gaussian:
        return rng.standard_normal((B, n))
    return rng.integers(0, 2, size=(B, n)).astype(float) * 2.0 - 1.0


@dataclass
class BandResult:
    """Estimates over a grid with pointwise and uniform 1 - alpha bands."""

    grid: np.ndarray
    grid_name: str                      # "q" or the policy-parameter name
    estimates: list[QuantileEstimate]
    alpha: float
    B: int
    seed: int
    c_alpha: float
    pointwise_lo: np.ndarray
    pointwise_hi: np.ndarray
    uniform_lo: np.ndarray
    uniform_hi: np.ndarray
    theta: np.ndarray
    se: np.ndarray
    uniform_narrower_flag: bool = False
    label: str = ""

    def covers(self, truth) -> bool:
        """Whether a truth curve lies inside the uniform band everywhere."""
        truth = np.asarray(truth, dtype=float)
        return bool(np.all((truth >= self.uniform_lo) & (truth <= self.uniform_hi)))


def uniform_band(estimates: list[QuantileEstimate], score_matrix: np.ndarray,
                 grid, alpha: float = 0.05, B: int = 1000, seed: int = 0,
                 grid_name: str = "q", gaussian_multipliers: bool = False,
                 label: str = "") -> BandResult:
    """Multiplier-bootstrap uniform band from per-cluster influence scores.

    score_matrix is (n, G): column g holds the estimated EIF scores of grid
    point g. Grid points with zero standard error are dropped from the
    supremum with a warning (they cannot be standardized).
    """
    grid = np.asarray(grid, dtype=float)
    score_matrix = np.asarray(score_matrix, dtype=float)
    if score_matrix.ndim != 2 or score_matrix.shape[1] != grid.shape[0]:
        raise ArgumentError(
            f"score matrix has shape {score_matrix.shape}, expected (n, {grid.shape[0]})")
    if len(estimates) != grid.shape[0]:
        raise ArgumentError("one estimate per grid point is required")
    if B < MIN_BOOTSTRAP_DRAWS:
        raise ArgumentError(f"need at least {MIN_BOOTSTRAP_DRAWS} bootstrap draws, got {B}")
    n, n_grid = score_matrix.shape
    sigma = np.sqrt(np.mean(score_matrix ** 2, axis=0))
    usable = sigma > 0
    if not usable.all():
        warnings.warn(f"{int((~usable).sum())} grid point(s) with zero standard error "
                      f"excluded from the supremum", stacklevel=2)
    if not usable.any():
        raise ArgumentError("no grid points with positive standard error")
    std_scores = score_matrix[:, usable] / sigma[usable]
    xi = rademacher_multipliers(n, B, seed, gaussian=gaussian_multipliers)
    sups = np.max(np.abs(xi @ std_scores), axis=1) / math.sqrt(n)
    c_alpha = float(np.quantile(sups, 1.0 - alpha))

    theta = np.array([e.theta_hat for e in estimates])
    se = np.array([e.se for e in estimates])
    z = z_quantile(alpha)
    flag = c_alpha < z
    if flag:
        warnings.warn(f"uniform critical value {c_alpha:.3f} fell below the pointwise "
                      f"z={z:.3f}; the uniform band is narrower than the pointwise band",
                      stacklevel=2)
    return BandResult(grid=grid, grid_name=grid_name, estimates=list(estimates),
                      alpha=alpha, B=B, seed=seed, c_alpha=c_alpha,
                      pointwise_lo=theta - z * se, pointwise_hi=theta + z * se,
                      uniform_lo=theta - c_alpha * se, uniform_hi=theta + c_alpha * se,
                      theta=theta, se=se, uniform_narrower_flag=flag, label=label)


def _check_grid(grid, lo, hi, name):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.shape[0] < 1:
        raise ArgumentError(f"{name} grid must be a nonempty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ArgumentError(f"{name} grid must be strictly increasing")
    if grid[0] < lo or grid[-1] > hi:
        raise ArgumentError(f"{name} grid must stay within [{lo:g}, {hi:g}]")
    return grid


def _estimate_grid(nuis: CrossFitNuisance, configs, alpha, B, seed, grid, grid_name, label):
    estimates, failures = [], []
    for cfg in configs:
        try:
            estimates.append(np_quantile_from_nuisance(nuis, *cfg))
        except Exception as exc:
            raise type(exc)(f"grid point {grid_name}={cfg_grid_value(cfg, grid_name):g} failed: {exc}") from exc
    scores = np.column_stack([e.eif_scores for e in estimates])
    return uniform_band(estimates, scores, grid, alpha=alpha, B=B, seed=seed,
                        grid_name=grid_name, label=label)


def cfg_grid_value(cfg, grid_name):
    t, q, spec = cfg
    return q if grid_name == "q" else spec.parameter


def band_over_q(dataset: Dataset, t: EstimandKind, spec, q_grid, L: int = 3,
                learner="logistic", alpha: float = 0.05, B: int = 1000,
                options: EstimatorOptions | None = None, seed: int = 0,
                nuisance: CrossFitNuisance | None = None) -> BandResult:
    """Uniform band for the quantile curve q -> Q_H^(t)(q) over a grid.

    Propensity fits and the fold plan are shared across grid points; the
    initial quantile and threshold regression are refit per q as the
    algorithm requires.
    """
    options = options or EstimatorOptions()
    q_grid = _check_grid(q_grid, options.eps, 1.0 - options.eps, "q")
    if nuisance is None:
        nuisance = build_nuisance(dataset, L=L, learner=learner, options=options, seed=seed)
    configs = [(t, float(q), spec) for q in q_grid]
    return _estimate_grid(nuisance, configs, alpha, B, seed + 101, q_grid, "q",
                          label=f"{spec.label()} t={t.value}")


def band_over_delta(dataset: Dataset, t: EstimandKind, q: float, delta_grid,
                    kind: str = "cps", L: int = 3, learner="logistic",
                    alpha: float = 0.05, B: int = 1000,
                    options: EstimatorOptions | None = None, seed: int = 0,
                    nuisance: CrossFitNuisance | None = None) -> BandResult:
    """Uniform band over the policy index (delta for cps/ips, alpha for uap)
    at a fixed quantile level."""
    from .policies import PolicySpec
    kind = kind.lower()
    if kind not in ("cps", "ips", "uap"):
        raise ArgumentError("policy-index bands support kinds cps, ips, uap")
    lo, hi = (0.0, 1.0) if kind == "uap" else (1e-12, np.inf)
    delta_grid = _check_grid(delta_grid, lo, hi, "delta" if kind != "uap" else "alpha")
    options = options or EstimatorOptions()
    options.check_q(q)
    if nuisance is None:
        nuisance = build_nuisance(dataset, L=L, learner=learner, options=options, seed=seed)
    configs = [(t, q, PolicySpec(kind, float(d))) for d in delta_grid]
    name = "alpha" if kind == "uap" else "delta"
    return _estimate_grid(nuisance, configs, alpha, B, seed + 101, delta_grid, name,
                          label=f"{kind} t={t.value} q={q:g}")


def difference_band(band_a: BandResult, band_b: BandResult, alpha: float = 0.05,
                    B: int = 1000, seed: int = 0, label: str = "") -> BandResult:
    """Uniform band for the pointwise difference of two estimated curves
    sharing a grid and fold plan (effect contrasts over a grid)."""
    if band_a.grid.shape != band_b.grid.shape or not np.allclose(band_a.grid, band_b.grid):
        raise ArgumentError("difference bands require identical grids")
    scores = (np.column_stack([e.eif_scores for e in band_a.estimates])
              - np.column_stack([e.eif_scores for e in band_b.estimates]))
    diff_estimates = []
    for ea, eb in zip(band_a.estimates, band_b.estimates):
        est = QuantileEstimate(t=ea.t, q=ea.q, policy=ea.policy,
                               theta_hat=ea.theta_hat - eb.theta_hat,
                               sigma_hat=float(np.sqrt(np.mean((ea.eif_scores - eb.eif_scores) ** 2))),
                               c_hat=np.nan, n_clusters=ea.n_clusters,
                               eif_scores=ea.eif_scores - eb.eif_scores,
                               estimator="np-contrast")
        diff_estimates.append(est)
    return uniform_band(diff_estimates, scores, band_a.grid, alpha=alpha, B=B,
                        seed=seed, grid_name=band_a.grid_name, label=label)
