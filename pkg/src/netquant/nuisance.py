"""Nuisance estimation: individual propensities, the exchangeable Gaussian
copula linking them into a cluster propensity score, and the threshold-
outcome regression.

The cluster propensity is evaluated through the one-factor latent
representation of the equicorrelated Gaussian copula,

    pi(a | X, M) = E_u[ prod_j p_j(u)^{a_j} (1 - p_j(u))^{1-a_j} ],
    p_j(u) = 1 - Phi((Phi^{-1}(1 - pi_ij) - sqrt(rho) u) / sqrt(1 - rho)),

with the expectation over u ~ N(0,1) taken by Gauss-Hermite quadrature.
This is exact for rho >= 0 and costs O(2^M * nodes) per cluster. Negative
association is only representable for pairs, where the bivariate normal
CDF is used directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr, ndtri

from .errors import ArgumentError, FitError
from .learners import PRED_CLIP, ConstantModel
from .policies import ClusterPropensityView
from .records import ClusterRecord, enumerate_treatment_vectors

DEFAULT_NODES = 32
RHO_EDGE = 1e-3          # keep rho away from the admissible boundary
MIN_COPULA_CLUSTERS = 30


@lru_cache(maxsize=16)
def gauss_hermite(nodes: int):
    """Nodes and weights for E[f(U)], U ~ N(0,1); weights sum to one."""
    if nodes < 16:
        raise ArgumentError(f"need at least 16 quadrature nodes, got {nodes}")
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def admissible_rho_range(m_max: int) -> tuple[float, float]:
    """Open interval of usable exchangeable correlations for clusters up
    to size m_max. Negative values are allowed only when m_max == 2."""
    if m_max < 1:
        raise ArgumentError("m_max must be >= 1")
    lo = -1.0 + RHO_EDGE if m_max == 2 else 0.0
    return lo, 1.0 - RHO_EDGE


def _check_rho(rho: float, m_max: int) -> None:
    lo, hi = admissible_rho_range(m_max)
    if not lo <= rho <= hi:
        raise ArgumentError(
            f"rho={rho:.4f} outside the admissible range [{lo:.4f}, {hi:.4f}] "
            f"for clusters of size up to {m_max}")


def _latent_success(marginals: np.ndarray, rho: float, u: np.ndarray) -> np.ndarray:
    """p_j(u) for a batch: marginals (N, M), u (K,) -> (N, M, K)."""
    z = ndtri(1.0 - np.clip(marginals, 1e-15, 1.0 - 1e-15))
    arg = (z[..., None] - np.sqrt(rho) * u) / np.sqrt(1.0 - rho)
    return 1.0 - ndtr(arg)


@lru_cache(maxsize=8)
def _gauss_legendre(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def bvn_cdf(h, k, rho: float, nodes: int = 128):
    """P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho,
    by Gauss-Legendre quadrature of Phi((k - rho u)/sqrt(1-rho^2)) phi(u) du."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if abs(rho) >= 1.0:
        raise ArgumentError("bivariate correlation must lie in (-1, 1)")
    lo = -8.5
    hi = np.minimum(h, 8.5)
    x, w = _gauss_legendre(nodes)
    halfwidth = (hi - lo) / 2.0
    centre = (hi + lo) / 2.0
    u = centre[..., None] + halfwidth[..., None] * x
    integrand = np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi) \
        * ndtr((k[..., None] - rho * u) / np.sqrt(1.0 - rho * rho))
    out = halfwidth * (integrand @ w)
    return np.where(h <= lo, 0.0, out)


def _pair_table(marginals: np.ndarray, rho: float) -> np.ndarray:
    """Exact joint of two exchangeable-copula Bernoullis, any rho in (-1, 1).

    marginals (N, 2) -> (N, 4) in lexicographic order (00, 01, 10, 11).
    """
    z = ndtri(1.0 - np.clip(marginals, 1e-15, 1.0 - 1e-15))
    p00 = bvn_cdf(z[:, 0], z[:, 1], rho)
    p0 = 1.0 - marginals          # P(A_j = 0) = Phi(z_j)
    p01 = p0[:, 0] - p00
    p10 = p0[:, 1] - p00
    p11 = 1.0 - p0[:, 0] - p0[:, 1] + p00
    return np.stack([p00, p01, p10, p11], axis=1)


def cluster_ps_table(marginals: np.ndarray, rho: float,
                     nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Joint probabilities of all 2^M treatment vectors for a batch of
    clusters sharing one size.

    marginals: (N, M) or (M,) individual propensities in (0, 1).
    Returns (N, 2^M) (or (2^M,) for a single cluster) in lexicographic order.
    """
    marginals = np.asarray(marginals, dtype=float)
    single = marginals.ndim == 1
    marg = np.atleast_2d(marginals)
    n, m = marg.shape
    if np.any(marg <= 0.0) or np.any(marg >= 1.0):
        raise ArgumentError("individual propensities must lie strictly in (0, 1)")
    _check_rho(rho, m)
    vecs = enumerate_treatment_vectors(m).astype(float)
    if m == 1:
        out = np.stack([1.0 - marg[:, 0], marg[:, 0]], axis=1)
    elif rho == 0.0:
        out = np.exp(np.log(marg) @ vecs.T + np.log1p(-marg) @ (1.0 - vecs).T)
    elif rho < 0.0:
        out = _pair_table(marg, rho)      # only reachable for m == 2
    else:
        u, w = gauss_hermite(nodes)
        p = _latent_success(marg, rho, u)
        logp = np.log(np.clip(p, 1e-300, None))
        logq = np.log(np.clip(1.0 - p, 1e-300, None))
        out = np.zeros((n, vecs.shape[0]))
        base = logq.sum(axis=1)                       # (N, K)
        diff = logp - logq                            # (N, M, K)
        for kk in range(u.shape[0]):
            out += w[kk] * np.exp(base[:, kk, None] + diff[:, :, kk] @ vecs.T)
    return out[0] if single else out


def cluster_ps(marginals, rho: float, a, nodes: int = DEFAULT_NODES) -> float:
    """pi(a | X, M) for one cluster and one treatment vector."""
    marginals = np.asarray(marginals, dtype=float).ravel()
    a = np.asarray(a).ravel()
    if a.shape[0] != marginals.shape[0]:
        raise ArgumentError("treatment vector and marginals disagree in length")
    table = cluster_ps_table(marginals, rho, nodes)
    idx = 0
    for bit in a:
        idx = (idx << 1) | int(bit)
    return float(table[idx])


def cluster_ps_observed(marginals: np.ndarray, treatments: np.ndarray, rho: float,
                        nodes: int = DEFAULT_NODES) -> np.ndarray:
    """pi(A_i | X_i, M) for a batch of clusters of one size, without
    materializing the full 2^M table."""
    marg = np.atleast_2d(np.asarray(marginals, dtype=float))
    a = np.atleast_2d(np.asarray(treatments, dtype=float))
    n, m = marg.shape
    _check_rho(rho, m)
    if m == 1:
        return np.where(a[:, 0] == 1, marg[:, 0], 1.0 - marg[:, 0])
    if rho == 0.0:
        return np.prod(np.where(a == 1, marg, 1.0 - marg), axis=1)
    if rho < 0.0:
        table = _pair_table(marg, rho)
        idx = (2 * a[:, 0] + a[:, 1]).astype(np.int64)
        return table[np.arange(n), idx]
    u, w = gauss_hermite(nodes)
    p = _latent_success(marg, rho, u)
    like = np.where(a[..., None] == 1, p, 1.0 - p).prod(axis=1)   # (N, K)
    return like @ w


@dataclass(frozen=True)
class CopulaFit:
    """Fitted exchangeable association and the quadrature size used."""

    rho: float
    nodes: int
    log_pseudolik: float
    n_clusters: int
    boundary_warning: bool = False

    def __post_init__(self):
        if self.nodes < 16:
            raise ArgumentError("CopulaFit requires >= 16 quadrature nodes")


def _pseudolik(rho, margins_by_size, treats_by_size, nodes) -> float:
    total = 0.0
    for m, marg in margins_by_size.items():
        probs = cluster_ps_observed(marg, treats_by_size[m], rho, nodes)
        if np.any(probs <= 0.0) or not np.isfinite(probs).all():
            return -np.inf
        total += float(np.log(probs).sum())
    return total


def fit_copula_rho(margin_rows, treatment_rows, nodes: int = DEFAULT_NODES,
                   tol: float = 1e-6) -> CopulaFit:
    """Maximum pseudo-likelihood fit of the exchangeable correlation.

    margin_rows / treatment_rows: per-cluster arrays of fitted individual
    propensities and observed treatments. Clusters of size one carry no
    association information and are dropped from the objective.
    """
    margins_by_size: dict[int, list] = {}
    treats_by_size: dict[int, list] = {}
    n_used = 0
    m_max = 1
    for marg, treat in zip(margin_rows, treatment_rows):
        marg = np.asarray(marg, dtype=float).ravel()
        m = marg.shape[0]
        m_max = max(m_max, m)
        if m < 2:
            continue
        margins_by_size.setdefault(m, []).append(marg)
        treats_by_size.setdefault(m, []).append(np.asarray(treat, dtype=float).ravel())
        n_used += 1
    if n_used == 0:
        raise FitError("copula association is unidentified: no clusters with at least two individuals")
    if n_used < MIN_COPULA_CLUSTERS:
        raise FitError(f"need >= {MIN_COPULA_CLUSTERS} clusters of size >= 2 to fit the copula, got {n_used}")
    margins_by_size = {m: np.vstack(v) for m, v in margins_by_size.items()}
    treats_by_size = {m: np.vstack(v) for m, v in treats_by_size.items()}

    lo, hi = admissible_rho_range(m_max)
    res = minimize_scalar(lambda r: -_pseudolik(r, margins_by_size, treats_by_size, nodes),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": tol})
    rho_hat = float(res.x)
    loglik = -float(res.fun)
    if not np.isfinite(loglik):
        raise FitError("copula pseudo-likelihood is non-finite at the optimum")
    boundary = min(rho_hat - lo, hi - rho_hat) < 10 * tol
    if boundary:
        warnings.warn(f"copula correlation fit hit the boundary of [{lo:.3f}, {hi:.3f}] "
                      f"at rho={rho_hat:.4f}", stacklevel=2)
    return CopulaFit(rho=rho_hat, nodes=nodes, log_pseudolik=loglik,
                     n_clusters=n_used, boundary_warning=bool(boundary))


def _ps_features(cluster: ClusterRecord) -> np.ndarray:
    m = cluster.size
    return np.column_stack([cluster.covariates, np.full(m, float(m))])


class IndividualPropensityModel:
    """Fitted map from (own covariates, cluster size) to P(A_ij = 1)."""

    def __init__(self, model):
        self.model = model

    def margins(self, cluster: ClusterRecord) -> np.ndarray:
        return self.model.predict(_ps_features(cluster))

    def summary(self) -> dict:
        return self.model.summary() if hasattr(self.model, "summary") else {"model": "constant"}


def fit_individual_ps(learner, clusters, seed: int | None = None) -> IndividualPropensityModel:
    """Fit the individual propensity learner on pooled (X_ij, M_i) rows."""
    feats = np.vstack([_ps_features(c) for c in clusters])
    labels = np.concatenate([c.treatments for c in clusters]).astype(float)
    if labels.shape[0] < 20:
        raise FitError(f"need at least 20 individuals to fit propensities, got {labels.shape[0]}")
    if labels.min() == labels.max():
        raise FitError("cannot fit individual propensities: all treatments identical")
    return IndividualPropensityModel(learner.fit(feats, labels, seed=seed))


class PropensityModel:
    """Individual margins plus copula association: the full cluster
    propensity evaluator used by estimators."""

    def __init__(self, margins_model: IndividualPropensityModel, copula: CopulaFit):
        self.margins_model = margins_model
        self.copula = copula

    def margins(self, cluster: ClusterRecord) -> np.ndarray:
        return self.margins_model.margins(cluster)

    def view(self, cluster: ClusterRecord) -> ClusterPropensityView:
        table = cluster_ps_table(self.margins(cluster), self.copula.rho, self.copula.nodes)
        return ClusterPropensityView(table)

    def views(self, clusters) -> list[ClusterPropensityView]:
        """Joint-probability views for many clusters, batched by size."""
        by_size: dict[int, list[int]] = {}
        margins = [self.margins(c) for c in clusters]
        for i, c in enumerate(clusters):
            by_size.setdefault(c.size, []).append(i)
        out: list[ClusterPropensityView | None] = [None] * len(clusters)
        for m, idx in by_size.items():
            tables = cluster_ps_table(np.vstack([margins[i] for i in idx]),
                                      self.copula.rho, self.copula.nodes)
            for row, i in enumerate(idx):
                out[i] = ClusterPropensityView(tables[row])
        return out

    def summary(self) -> dict:
        return {"margins": self.margins_model.summary(),
                "rho": self.copula.rho, "nodes": self.copula.nodes,
                "copula_boundary_warning": self.copula.boundary_warning}


def fit_cluster_propensity(learner, clusters, seed: int | None = None,
                           nodes: int = DEFAULT_NODES) -> PropensityModel:
    """Two-step hybrid fit: learner for the margins, then maximum
    pseudo-likelihood for the exchangeable copula correlation."""
    margins_model = fit_individual_ps(learner, clusters, seed=seed)
    margin_rows = [margins_model.margins(c) for c in clusters]
    treat_rows = [c.treatments for c in clusters]
    copula = fit_copula_rho(margin_rows, treat_rows, nodes=nodes)
    return PropensityModel(margins_model, copula)


class ThresholdRegressionModel:
    """Fitted conditional probability that the outcome falls at or below a
    frozen threshold, as a function of (own arm, peer treated fraction,
    own covariates, cluster size)."""

    def __init__(self, model, theta: float):
        self.model = model
        self.theta = float(theta)

    def predict_rows(self, own, peer_mean, covariates, size) -> np.ndarray:
        own = np.asarray(own, dtype=float).ravel()
        peer_mean = np.asarray(peer_mean, dtype=float).ravel()
        covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
        feats = np.column_stack([own, peer_mean, covariates,
                                 np.full(own.shape[0], float(size))])
        return self.model.predict(feats)

    def grid_for_cluster(self, cluster: ClusterRecord) -> np.ndarray:
        """m-hat on the (individual, own arm, peer treated count) grid as an
        (M, 2, M') array with M' = max(M - 1, 0) + 1 peer-count levels."""
        m = cluster.size
        n_peer = max(m - 1, 0) + 1
        peer_levels = np.arange(n_peer) / max(m - 1, 1)
        own = np.repeat(np.array([0.0, 1.0]), n_peer)            # (2 * n_peer,)
        pm = np.tile(peer_levels, 2)
        rows_per_ind = own.shape[0]
        feats = np.empty((m * rows_per_ind, cluster.covariates.shape[1] + 3))
        for j in range(m):
            block = slice(j * rows_per_ind, (j + 1) * rows_per_ind)
            feats[block, 0] = own
            feats[block, 1] = pm
            feats[block, 2:-1] = cluster.covariates[j]
            feats[block, -1] = float(m)
        preds = self.model.predict(feats)
        return preds.reshape(m, 2, n_peer)


def threshold_features(clusters) -> tuple[np.ndarray, np.ndarray]:
    """Stacked (own arm, peer mean, X_ij, M) rows and outcomes for training."""
    rows, outcomes = [], []
    for c in clusters:
        m = c.size
        a = c.treatments.astype(float)
        peer = (a.sum() - a) / max(m - 1, 1)
        rows.append(np.column_stack([a, peer, c.covariates, np.full(m, float(m))]))
        outcomes.append(c.outcomes)
    return np.vstack(rows), np.concatenate(outcomes)


def fit_threshold_regression(learner, clusters, theta_init: float,
                             seed: int | None = None) -> ThresholdRegressionModel:
    """Regress 1{Y_ij <= theta_init} on the interference feature map.

    All-identical labels are not an error (the threshold may sit in a
    tail): the constant clipped model is returned instead.
    """
    if not np.isfinite(theta_init):
        raise ArgumentError("threshold must be finite")
    clusters = list(clusters)
    if not clusters:
        raise ArgumentError("threshold regression needs a nonempty training set")
    feats, y = threshold_features(clusters)
    labels = (y <= theta_init).astype(float)
    if labels.min() == labels.max():
        return ThresholdRegressionModel(ConstantModel(labels.mean()), theta_init)
    return ThresholdRegressionModel(learner.fit(feats, labels, seed=seed), theta_init)
