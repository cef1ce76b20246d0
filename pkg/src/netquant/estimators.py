"""Quantile estimators: cross-fitted IPW, the three-way cross-fitted
nonparametric efficient estimator, its sandwich variance, and the four
effect contrasts.

The efficient estimating equation splits per cluster into a part that is
nondecreasing in theta (the smoothed weighted-indicator term) plus a
theta-free augmentation term, so the pooled equation can be bracketed and
solved by Brent's method and then polished with Newton steps using the
closed-form derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import (ArgumentError, DegenerateOutcomeError, OverlapError,
                     PositivityError, SolverError, VarianceError)
from .learners import get_learner
from .nuisance import (DEFAULT_NODES, ThresholdRegressionModel,
                       fit_cluster_propensity, fit_threshold_regression)
from .policies import (ClusterPropensityView, PolicySpec, _index_maps,
                       cond_eif_omega_table, policy_mass_table)
from .records import Dataset, EstimandKind, FoldPlan, partition_folds

BANDWIDTH_EXPONENT = -0.26


def _logistic_cdf(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


_KERNELS = {
    "normal": (lambda x: ndtr(x), lambda x: np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)),
    "logistic": (_logistic_cdf, lambda x: _logistic_cdf(x) * (1.0 - _logistic_cdf(x))),
}


@dataclass(frozen=True)
class SmoothingSpec:
    """Kernel CDF and bandwidth used to smooth the indicator 1{Y <= theta}."""

    bandwidth: float
    kernel: str = "normal"

    def __post_init__(self):
        if self.kernel not in _KERNELS:
            raise ArgumentError(f"unknown kernel {self.kernel!r}; available: {sorted(_KERNELS)}")
        if not self.bandwidth > 0:
            raise ArgumentError(f"bandwidth must be positive, got {self.bandwidth}")

    def cdf(self, x):
        return _KERNELS[self.kernel][0](np.asarray(x, dtype=float))

    def pdf(self, x):
        return _KERNELS[self.kernel][1](np.asarray(x, dtype=float))


def bandwidth(dataset: Dataset) -> float:
    """Rule-of-thumb bandwidth: outcome SD times (total individuals)^-0.26."""
    y = dataset.pooled_outcomes()
    if y.shape[0] < 2:
        raise ArgumentError("need at least 2 individuals to form a bandwidth")
    sd = float(np.std(y, ddof=1))
    if sd == 0.0:
        raise DegenerateOutcomeError("all outcomes identical: no bandwidth can be formed")
    return sd * float(y.shape[0]) ** BANDWIDTH_EXPONENT


@dataclass
class EstimatorOptions:
    """Tuning knobs shared by the IPW and efficient estimators."""

    eps: float = 0.05                 # admissible quantile range [eps, 1 - eps]
    kernel: str = "normal"
    bandwidth: float | None = None    # None -> rule-of-thumb from the data
    positivity_floor: float = 1e-12
    truncate_weights: bool = False
    truncation_cap: float = 50.0
    eta_pairing: str = "fixed-own"    # or "literal"
    solver_tol: float = 1e-10         # on the estimating-equation value
    bracket_pad: float = 8.0          # bracket half-extension, in bandwidths
    max_bracket_doublings: int = 3
    quadrature_nodes: int = DEFAULT_NODES
    ipw_bootstrap: int = 500          # cluster-bootstrap resamples for IPW intervals

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise ArgumentError("eps must lie in (0, 0.5)")
        if self.eta_pairing not in ("fixed-own", "literal"):
            raise ArgumentError("eta_pairing must be 'fixed-own' or 'literal'")

    def check_q(self, q: float) -> None:
        if not self.eps <= q <= 1.0 - self.eps:
            raise ArgumentError(f"quantile level {q} outside [{self.eps}, {1 - self.eps}]")


@lru_cache(maxsize=64)
def _collapse_operator(m: int) -> np.ndarray:
    """(m * 2 * n_peer, 2^m) 0/1 matrix summing a per-vector array into
    (individual, own arm, peer treated count) cells."""
    vecs, _, _, s = _index_maps(m)
    n_peer = max(m - 1, 0) + 1
    n_vec = vecs.shape[0]
    op = np.zeros((m * 2 * n_peer, n_vec))
    for j in range(m):
        own = vecs[:, j].astype(np.int64)
        rows = j * (2 * n_peer) + own * n_peer + (s - own)
        op[rows, np.arange(n_vec)] = 1.0
    return op


@dataclass
class _ClusterTerm:
    """Per-cluster pieces of the estimating equation."""

    psi_weights: np.ndarray    # (M,) w^(t)_j(A_i) / (M_i * pi(A_i))
    outcomes: np.ndarray       # (M,)
    eta: float                 # augmentation term, theta-free
    truncated: bool


class PolicyClusterContext:
    """Policy tables (H, peer mass, conditional EIF) for one cluster, built
    once per (policy, cluster) and shared across estimand kinds."""

    def __init__(self, spec: PolicySpec, view: ClusterPropensityView, treatments,
                 options: EstimatorOptions):
        self.spec = spec
        self.view = view
        self.options = options
        self.m = view.size
        self.a_obs = np.asarray(treatments, dtype=np.int8).ravel()
        idx = 0
        for bit in self.a_obs:
            idx = (idx << 1) | int(bit)
        self.obs_index = idx
        self.h = policy_mass_table(spec, view)
        self.omega = cond_eif_omega_table(spec, self.a_obs, view, h=self.h)
        pi_obs = float(view.joint[idx])
        self.truncated = False
        if pi_obs <= options.positivity_floor:
            raise PositivityError(
                f"{spec.label()}: observed treatment vector has propensity {pi_obs:.3g} "
                f"below the positivity floor")
        inv = 1.0 / pi_obs
        if options.truncate_weights and inv > options.truncation_cap:
            inv = options.truncation_cap
            self.truncated = True
        self.inv_pi_obs = inv

    def w_obs(self, t: EstimandKind) -> np.ndarray:
        """w^(t)_j evaluated at the observed treatment vector, as (M,)."""
        if t is EstimandKind.STAR:
            return np.full(self.m, self.h[self.obs_index])
        arm = t.fixed_arm
        _, sib0, sib1, _ = _index_maps(self.m)
        hpeer_obs = self.h[sib0[:, self.obs_index]] + self.h[sib1[:, self.obs_index]]
        return np.where(self.a_obs == arm, hpeer_obs, 0.0)

    def eta_term(self, t: EstimandKind, q: float, mgrid: np.ndarray) -> float:
        """Augmentation term (1/M) sum_j sum_a {Omega^(t) + w^(t)(pi - 1{A=a})/pi}
        (m-hat - q), with m-hat supplied on the (j, own, peer count) grid."""
        m = self.m
        n_peer = max(m - 1, 0) + 1
        op = _collapse_operator(m)
        s_obs = int(self.a_obs.sum())
        if t is EstimandKind.STAR:
            tbl = (op @ (self.omega + self.h)).reshape(m, 2, n_peer)
            corr = self.inv_pi_obs * self.h[self.obs_index]
            j_idx = np.arange(m)
            tbl[j_idx, self.a_obs, s_obs - self.a_obs] -= corr
            return float(np.sum(tbl * (mgrid - q)) / m)
        arm = t.fixed_arm
        _, sib0, sib1, _ = _index_maps(m)
        hpeer_obs = self.h[sib0[:, self.obs_index]] + self.h[sib1[:, self.obs_index]]
        hit = self.a_obs == arm
        if self.options.eta_pairing == "fixed-own":
            g = (op @ (self.omega + self.h)).reshape(m, 2, n_peer)
            tbl = g[:, 0, :] + g[:, 1, :]
            if hit.any():
                tbl[hit, s_obs - arm] -= self.inv_pi_obs * hpeer_obs[hit]
            return float(np.sum(tbl * (mgrid[:, arm, :] - q)) / m)
        # literal pairing: the Omega part attaches m-hat at own arm 0,
        # matching the displayed indicator 1{a_ij = 0} verbatim.
        go = (op @ self.omega).reshape(m, 2, n_peer)
        gw = (op @ self.h).reshape(m, 2, n_peer)
        t_omega = go[:, 0, :] + go[:, 1, :]
        t_w = gw[:, 0, :] + gw[:, 1, :]
        if hit.any():
            t_w[hit, s_obs - arm] -= self.inv_pi_obs * hpeer_obs[hit]
        return float(np.sum(t_omega * (mgrid[:, 0, :] - q)) / m
                     + np.sum(t_w * (mgrid[:, arm, :] - q)) / m)


def eif_terms(cluster, theta: float, q: float, t: EstimandKind, spec: PolicySpec,
              view: ClusterPropensityView, mhat: ThresholdRegressionModel,
              smoothing: SmoothingSpec,
              options: EstimatorOptions | None = None) -> tuple[float, float]:
    """Per-cluster smoothed EIF pieces (psi part at theta, eta part).

    The psi part is nondecreasing in theta; the eta part does not depend
    on theta.
    """
    options = options or EstimatorOptions()
    ctx = PolicyClusterContext(spec, view, cluster.treatments, options)
    w = ctx.w_obs(t) * ctx.inv_pi_obs / cluster.size
    psi = float(np.sum(w * (smoothing.cdf((theta - cluster.outcomes) / smoothing.bandwidth) - q)))
    eta = ctx.eta_term(t, q, mhat.grid_for_cluster(cluster))
    return psi, eta


def _weighted_quantile(y: np.ndarray, w: np.ndarray, q: float, policy_label: str) -> float:
    total = float(w.sum())
    if total <= 0.0:
        raise OverlapError(
            f"policy {policy_label}: total inverse-probability weight is zero "
            f"(no observed treatment vectors carry policy mass)")
    order = np.argsort(y, kind="stable")
    cum = np.cumsum(w[order])
    pos = int(np.searchsorted(cum, q * total, side="left"))
    pos = min(pos, y.shape[0] - 1)
    return float(y[order][pos])


def ipw_quantile(clusters, t: EstimandKind, q: float, spec: PolicySpec, views,
                 options: EstimatorOptions | None = None) -> float:
    """Generalized root of the weighted step estimating function: the
    smallest observed outcome at which the cumulative sorted weight reaches
    q times the total weight."""
    options = options or EstimatorOptions()
    options.check_q(q)
    ys, ws = [], []
    for cluster, view in zip(clusters, views):
        ctx = PolicyClusterContext(spec, view, cluster.treatments, options)
        ws.append(ctx.w_obs(t) * (ctx.inv_pi_obs / cluster.size))
        ys.append(cluster.outcomes)
    return _weighted_quantile(np.concatenate(ys), np.concatenate(ws), q, spec.label())


@dataclass
class QuantileEstimate:
    """A policy-specific quantile estimate with its EIF-based inference."""

    t: EstimandKind
    q: float
    policy: PolicySpec
    theta_hat: float
    sigma_hat: float
    c_hat: float
    n_clusters: int
    eif_scores: np.ndarray
    estimator: str = "np"
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self) -> float:
        return self.sigma_hat / math.sqrt(self.n_clusters)

    def label(self) -> str:
        tname = {EstimandKind.STAR: "star", EstimandKind.FIX0: "0", EstimandKind.FIX1: "1"}[self.t]
        return f"Q[{self.policy.label()}]^({tname})(q={self.q:g})"


@dataclass
class CrossFitNuisance:
    """Fold plan plus per-fold propensity fits, reusable across estimand
    kinds, quantile levels, and policies on one dataset."""

    dataset: Dataset
    plan: FoldPlan
    h: float
    options: EstimatorOptions
    learner_name: str
    seed: int
    eval_views: list            # per cluster: view under its evaluation fold's model
    init_views: list            # per fold: views for the initial-quantile index set
    eval_models: list
    init_models: list
    make_learner: object = None
    diagnostics: dict = field(default_factory=dict)

    def fold_clusters(self, indices):
        return [self.dataset.clusters[i] for i in indices]


def build_nuisance(dataset: Dataset, L: int = 3, learner="logistic",
                   options: EstimatorOptions | None = None, seed: int = 0,
                   learner_kwargs: dict | None = None) -> CrossFitNuisance:
    """Steps 1 and 2c of the three-way procedure: fold partition and the
    per-fold cluster-propensity fits (plus the separate fits, on the
    initial-quantile sets only, that back the fold-local IPW anchors)."""
    options = options or EstimatorOptions()
    if isinstance(learner, str):
        learner_name = learner
        make_learner = lambda: get_learner(learner, **(learner_kwargs or {}))
    else:
        learner_name = getattr(learner, "name", type(learner).__name__)
        make_learner = lambda: learner
    plan = partition_folds(dataset.n_clusters, L, seed)
    h = options.bandwidth if options.bandwidth is not None else bandwidth(dataset)

    eval_models, init_models, init_views = [], [], []
    eval_views: list = [None] * dataset.n_clusters
    rho_by_fold, clip_counters = [], []
    for l in range(L):
        train_idx = np.concatenate([plan.ipw_sets[l], plan.outcome_sets[l]])
        model = fit_cluster_propensity(make_learner(),
                                       [dataset.clusters[i] for i in train_idx],
                                       seed=seed * 1000 + 2 * l,
                                       nodes=options.quadrature_nodes)
        eval_models.append(model)
        rho_by_fold.append(model.copula.rho)
        fold_clusters = [dataset.clusters[i] for i in plan.eval_sets[l]]
        for i, v in zip(plan.eval_sets[l], model.views(fold_clusters)):
            eval_views[i] = v
        init_model = fit_cluster_propensity(make_learner(),
                                            [dataset.clusters[i] for i in plan.ipw_sets[l]],
                                            seed=seed * 1000 + 2 * l + 1,
                                            nodes=options.quadrature_nodes)
        init_models.append(init_model)
        init_views.append(init_model.views([dataset.clusters[i] for i in plan.ipw_sets[l]]))
        clip_counters.extend([model.margins_model.model, init_model.margins_model.model])
    clip_events = sum(getattr(m, "counter").events for m in clip_counters if hasattr(m, "counter"))
    diag = {"rho_by_fold": rho_by_fold, "margin_clip_events": clip_events,
            "bandwidth": h, "L": L, "learner": learner_name}
    return CrossFitNuisance(dataset=dataset, plan=plan, h=h, options=options,
                            learner_name=learner_name, seed=seed,
                            eval_views=eval_views, init_views=init_views,
                            eval_models=eval_models, init_models=init_models,
                            make_learner=make_learner, diagnostics=diag)


def _mhat_grids(model: ThresholdRegressionModel, clusters) -> list[np.ndarray]:
    """m-hat grids for many clusters with a single batched predict call."""
    blocks, shapes = [], []
    for c in clusters:
        m = c.size
        n_peer = max(m - 1, 0) + 1
        peer_levels = np.arange(n_peer) / max(m - 1, 1)
        own = np.repeat(np.array([0.0, 1.0]), n_peer)
        pm = np.tile(peer_levels, 2)
        feats = np.empty((m * 2 * n_peer, c.covariates.shape[1] + 3))
        for j in range(m):
            block = slice(j * 2 * n_peer, (j + 1) * 2 * n_peer)
            feats[block, 0] = own
            feats[block, 1] = pm
            feats[block, 2:-1] = c.covariates[j]
            feats[block, -1] = float(m)
        blocks.append(feats)
        shapes.append((m, 2, n_peer))
    preds = model.model.predict(np.vstack(blocks))
    out, start = [], 0
    for shape in shapes:
        count = shape[0] * shape[1] * shape[2]
        out.append(preds[start:start + count].reshape(shape))
        start += count
    return out


def _solve_smoothed_ee(y_pool, v_pool, q, eta_mean, smoothing: SmoothingSpec,
                       options: EstimatorOptions):
    """Root of F(theta) = sum v * Phi((theta - y)/h) - q * sum v + eta_mean."""
    h = smoothing.bandwidth
    vsum = float(v_pool.sum())

    def ee(theta):
        return float(v_pool @ smoothing.cdf((theta - y_pool) / h)) - q * vsum + eta_mean

    def ee_deriv(theta):
        return float(v_pool @ smoothing.pdf((theta - y_pool) / h)) / h

    pad = options.bracket_pad * h
    lo, hi = float(y_pool.min()) - pad, float(y_pool.max()) + pad
    f_lo, f_hi = ee(lo), ee(hi)
    widenings = 0
    while f_lo * f_hi > 0 and widenings < options.max_bracket_doublings:
        span = hi - lo
        lo, hi = lo - span / 2, hi + span / 2
        f_lo, f_hi = ee(lo), ee(hi)
        widenings += 1
    if f_lo * f_hi > 0:
        raise SolverError(
            f"estimating equation has no sign change on [{lo:.4g}, {hi:.4g}]: "
            f"EE({lo:.4g})={f_lo:.4g}, EE({hi:.4g})={f_hi:.4g}; the requested "
            f"quantile appears to sit outside the supported outcome range")
    root, res = brentq(ee, lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=200,
                       full_output=True)
    iterations = res.iterations
    residual = ee(root)
    polish = 0
    while abs(residual) > options.solver_tol and polish < 20:
        deriv = ee_deriv(root)
        if deriv <= 0.0:
            break
        root -= residual / deriv
        residual = ee(root)
        polish += 1
    if abs(residual) > options.solver_tol:
        raise SolverError(f"EE residual {residual:.3g} above tolerance {options.solver_tol:g} "
                          f"after polishing")
    return float(root), float(residual), iterations + polish, ee_deriv


def c_hat_from_terms(terms: list[_ClusterTerm], theta: float,
                     smoothing: SmoothingSpec) -> float:
    """Closed-form derivative of the pooled smoothed EE at theta:
    (nh)^-1 sum_ij w^(t)(A_i) phi((theta - Y_ij)/h) / (M_i pi(A_i))."""
    h = smoothing.bandwidth
    total = 0.0
    for term in terms:
        total += float(term.psi_weights @ smoothing.pdf((theta - term.outcomes) / h))
    c = total / (len(terms) * h)
    if c <= 1e-12:
        raise VarianceError(
            f"closed-form EE derivative is {c:.3g} at theta={theta:.4g}: the quantile "
            f"sits outside the data support of the kernel")
    return c


def c_hat(clusters, theta: float, t: EstimandKind, spec: PolicySpec, views,
          smoothing: SmoothingSpec, options: EstimatorOptions | None = None) -> float:
    """Public closed-form C-hat on explicit clusters/views."""
    options = options or EstimatorOptions()
    terms = []
    for cluster, view in zip(clusters, views):
        ctx = PolicyClusterContext(spec, view, cluster.treatments, options)
        terms.append(_ClusterTerm(ctx.w_obs(t) * (ctx.inv_pi_obs / cluster.size),
                                  cluster.outcomes, 0.0, ctx.truncated))
    return c_hat_from_terms(terms, theta, smoothing)


def np_quantile_from_nuisance(nuis: CrossFitNuisance, t: EstimandKind, q: float,
                              spec: PolicySpec) -> QuantileEstimate:
    """Steps 2a, 2b, and 3 of the three-way procedure on a prebuilt
    nuisance: fold-local IPW anchors, threshold regressions frozen at the
    anchors, then the pooled smoothed EE solved over the evaluation folds."""
    options = nuis.options
    options.check_q(q)
    dataset, plan = nuis.dataset, nuis.plan
    smoothing = SmoothingSpec(bandwidth=nuis.h, kernel=options.kernel)

    theta_inits, mhat_models = [], []
    for l in range(plan.L):
        init_clusters = nuis.fold_clusters(plan.ipw_sets[l])
        theta_init = ipw_quantile(init_clusters, t, q, spec, nuis.init_views[l], options)
        theta_inits.append(theta_init)
        learner = nuis.make_learner()
        mhat = fit_threshold_regression(learner,
                                        nuis.fold_clusters(plan.outcome_sets[l]),
                                        theta_init, seed=nuis.seed * 1000 + 500 + l)
        mhat_models.append(mhat)

    terms: list[_ClusterTerm] = [None] * dataset.n_clusters
    truncation_count = 0
    for l in range(plan.L):
        fold_clusters = nuis.fold_clusters(plan.eval_sets[l])
        grids = _mhat_grids(mhat_models[l], fold_clusters)
        for i, cluster, grid in zip(plan.eval_sets[l], fold_clusters, grids):
            ctx = PolicyClusterContext(spec, nuis.eval_views[i], cluster.treatments, options)
            eta = ctx.eta_term(t, q, grid)
            terms[i] = _ClusterTerm(ctx.w_obs(t) * (ctx.inv_pi_obs / cluster.size),
                                    cluster.outcomes, eta, ctx.truncated)
            truncation_count += int(ctx.truncated)

    n = dataset.n_clusters
    y_pool = np.concatenate([tm.outcomes for tm in terms])
    v_pool = np.concatenate([tm.psi_weights for tm in terms]) / n
    eta_mean = float(np.mean([tm.eta for tm in terms]))
    theta_hat, residual, iterations, _ = _solve_smoothed_ee(
        y_pool, v_pool, q, eta_mean, smoothing, options)

    c = c_hat_from_terms(terms, theta_hat, smoothing)
    gamma = np.empty(n)
    for i, tm in enumerate(terms):
        psi = float(tm.psi_weights @ (smoothing.cdf((theta_hat - tm.outcomes) / smoothing.bandwidth) - q))
        gamma[i] = psi + tm.eta
    scores = gamma / c
    sigma = float(np.sqrt(np.mean(scores ** 2)))
    mhat_clips = sum(m.model.counter.events for m in mhat_models if hasattr(m.model, "counter"))
    diag = {"theta_init_by_fold": theta_inits, "solver_iterations": iterations,
            "ee_residual": residual, "bandwidth": nuis.h,
            "truncated_clusters": truncation_count,
            "mhat_clip_events": mhat_clips, **nuis.diagnostics}
    return QuantileEstimate(t=t, q=q, policy=spec, theta_hat=theta_hat,
                            sigma_hat=sigma, c_hat=c, n_clusters=n,
                            eif_scores=scores, estimator="np", diagnostics=diag)


def np_quantile(dataset: Dataset, t: EstimandKind, q: float, spec: PolicySpec,
                L: int = 3, learner="logistic",
                options: EstimatorOptions | None = None, seed: int = 0,
                nuisance: CrossFitNuisance | None = None) -> QuantileEstimate:
    """Full three-way cross-fitted nonparametric efficient estimate."""
    if nuisance is None:
        nuisance = build_nuisance(dataset, L=L, learner=learner, options=options, seed=seed)
    return np_quantile_from_nuisance(nuisance, t, q, spec)


def ipw_quantile_crossfit(nuis: CrossFitNuisance, t: EstimandKind, q: float,
                          spec: PolicySpec, bootstrap: int | None = None,
                          seed: int | None = None) -> QuantileEstimate:
    """The cross-fitted IPW estimator over all folds, with a cluster
    bootstrap percentile interval (the paper-form IPW interval is not
    reproducible from the available text, so this labeled substitute is
    reported instead)."""
    options = nuis.options
    options.check_q(q)
    dataset = nuis.dataset
    n = dataset.n_clusters
    cluster_w, cluster_y = [], []
    for i, cluster in enumerate(dataset.clusters):
        ctx = PolicyClusterContext(spec, nuis.eval_views[i], cluster.treatments, options)
        cluster_w.append(ctx.w_obs(t) * (ctx.inv_pi_obs / cluster.size))
        cluster_y.append(cluster.outcomes)
    y = np.concatenate(cluster_y)
    w = np.concatenate(cluster_w)
    theta = _weighted_quantile(y, w, q, spec.label())

    B = options.ipw_bootstrap if bootstrap is None else bootstrap
    lo = hi = theta
    boot_sd = 0.0
    if B > 0:
        rng = np.random.default_rng(nuis.seed + 202 if seed is None else seed)
        owner = np.repeat(np.arange(n), [c.size for c in dataset.clusters])
        order = np.argsort(y, kind="stable")
        y_sorted, w_sorted, owner_sorted = y[order], w[order], owner[order]
        counts = rng.multinomial(n, np.full(n, 1.0 / n), size=B)
        draws = np.empty(B)
        scaled = w_sorted[None, :] * counts[:, owner_sorted]
        totals = scaled.sum(axis=1)
        cums = np.cumsum(scaled, axis=1)
        for b in range(B):
            if totals[b] <= 0:
                draws[b] = theta
                continue
            pos = int(np.searchsorted(cums[b], q * totals[b], side="left"))
            draws[b] = y_sorted[min(pos, y_sorted.shape[0] - 1)]
        lo, hi = np.percentile(draws, [2.5, 97.5])
        boot_sd = float(np.std(draws, ddof=1))
    diag = {"bootstrap_resamples": B, "ci_lo": float(lo), "ci_hi": float(hi),
            "interval": "cluster-bootstrap percentile"}
    return QuantileEstimate(t=t, q=q, policy=spec, theta_hat=theta,
                            sigma_hat=boot_sd * math.sqrt(n), c_hat=np.nan,
                            n_clusters=n, eif_scores=np.full(n, np.nan),
                            estimator="ipw", diagnostics=diag)


EFFECT_KINDS = ("oqe", "dqe", "sqe0", "sqe1", "tqe")


@dataclass
class EffectEstimate:
    """A contrast of two policy-specific quantile estimates."""

    kind: str
    q: float
    policy: PolicySpec
    reference: PolicySpec
    value: float
    sigma: float
    n_clusters: int
    components: tuple[QuantileEstimate, QuantileEstimate]
    eif_scores: np.ndarray

    @property
    def se(self) -> float:
        return self.sigma / math.sqrt(self.n_clusters)

    def label(self) -> str:
        if self.kind == "dqe":
            return f"DQE(q={self.q:g}; {self.policy.label()})"
        name = self.kind.upper()
        return f"{name}(q={self.q:g}; {self.policy.label()}, {self.reference.label()})"


def _contrast(kind, a: QuantileEstimate, b: QuantileEstimate, policy, reference) -> EffectEstimate:
    scores = a.eif_scores - b.eif_scores
    sigma = float(np.sqrt(np.mean(scores ** 2)))
    return EffectEstimate(kind=kind, q=a.q, policy=policy, reference=reference,
                          value=a.theta_hat - b.theta_hat, sigma=sigma,
                          n_clusters=a.n_clusters, components=(a, b),
                          eif_scores=scores)


def effects(dataset: Dataset, q: float, policy: PolicySpec, reference: PolicySpec,
            L: int = 3, learner="logistic", options: EstimatorOptions | None = None,
            seed: int = 0, nuisance: CrossFitNuisance | None = None) -> dict:
    """All network quantile effect contrasts between ``policy`` (H) and
    ``reference`` (H'), sharing one fold plan and nuisance fit.

    Returns the six quantile estimates plus the effect contrasts keyed by
    'oqe', 'dqe' (under H), 'dqe_ref' (under H'), 'sqe0', 'sqe1', 'tqe'.
    """
    if nuisance is None:
        nuisance = build_nuisance(dataset, L=L, learner=learner, options=options, seed=seed)
    est = {}
    for label, spec in (("h", policy), ("href", reference)):
        for t in EstimandKind:
            est[(label, t)] = np_quantile_from_nuisance(nuisance, t, q, spec)
    out = {"estimates": est}
    out["oqe"] = _contrast("oqe", est[("h", EstimandKind.STAR)], est[("href", EstimandKind.STAR)],
                           policy, reference)
    out["dqe"] = _contrast("dqe", est[("h", EstimandKind.FIX1)], est[("h", EstimandKind.FIX0)],
                           policy, policy)
    out["dqe_ref"] = _contrast("dqe", est[("href", EstimandKind.FIX1)], est[("href", EstimandKind.FIX0)],
                               reference, reference)
    out["sqe0"] = _contrast("sqe0", est[("h", EstimandKind.FIX0)], est[("href", EstimandKind.FIX0)],
                            policy, reference)
    out["sqe1"] = _contrast("sqe1", est[("h", EstimandKind.FIX1)], est[("href", EstimandKind.FIX1)],
                            policy, reference)
    out["tqe"] = _contrast("tqe", est[("h", EstimandKind.FIX1)], est[("href", EstimandKind.FIX0)],
                           policy, reference)
    return out
