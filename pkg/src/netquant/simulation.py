"""Synthetic clustered-study generator, super-population truth oracle, and
the Monte Carlo replication harness.

The data-generating process draws cluster sizes uniformly from {3,...,6},
correlates binary treatments through an exchangeable Gaussian copula over
logistic margins, and draws outcomes from conditional normals (again
copula-coupled within cluster). Scenario "B" exposes transformed
covariates to the learners while leaving the data law untouched.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ArgumentError
from .estimators import (EstimatorOptions, build_nuisance,
                         ipw_quantile_crossfit, np_quantile_from_nuisance)
from .inference import pointwise_ci
from .nuisance import cluster_ps_table
from .policies import PolicySpec, _index_maps, shifted_marginal
from .records import ClusterRecord, Dataset, EstimandKind, build_dataset

_EXPIT = lambda z: 1.0 / (1.0 + np.exp(-z))

SCENARIOS = ("A", "B")


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of the simulated clustered observational study."""

    n: int = 500
    size_support: tuple = (3, 4, 5, 6)
    ps_coefs: tuple = (-0.5, 0.3, 0.3, 0.3)          # intercept, X1, X2, X3
    rho_a: float = 0.1                               # treatment copula correlation
    outcome_coefs: tuple = (3.0, 1.5, 3.0, 5.0, 5.0, 2.0)  # 1, own A, peer mean, X1, X2, X3
    outcome_var_base: float = 1.0
    outcome_var_treated: float = 1.0                 # Var(Y) = base + treated * A_ij
    rho_y: float = 0.1                               # outcome copula correlation
    scenario: str = "A"
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ArgumentError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.n < 1:
            raise ArgumentError("need at least one cluster")

    def overrides(self) -> list[str]:
        """Names of fields changed from the reference simulation settings."""
        ref = DgpSpec()
        skip = {"n", "scenario", "seed"}
        return [f.name for f in fields(self)
                if f.name not in skip and getattr(self, f.name) != getattr(ref, f.name)]


def _margins_from_x(x: np.ndarray, coefs) -> np.ndarray:
    """P(A=1 | X) for X with trailing dimension 3."""
    c0, c1, c2, c3 = coefs
    return _EXPIT(c0 + c1 * x[..., 0] + c2 * x[..., 1] + c3 * x[..., 2])


def _outcome_mean(own: np.ndarray, peer_mean: np.ndarray, x: np.ndarray, coefs) -> np.ndarray:
    b0, b_own, b_peer, b1, b2, b3 = coefs
    return b0 + b_own * own + b_peer * peer_mean + b1 * x[..., 0] + b2 * x[..., 1] + b3 * x[..., 2]


def _equicorrelated_normals(rng, n, m, rho) -> np.ndarray:
    """(n, m) draw from the exchangeable standard normal with correlation rho."""
    common = rng.standard_normal((n, 1))
    idio = rng.standard_normal((n, m))
    return math.sqrt(rho) * common + math.sqrt(1.0 - rho) * idio


def _draw_covariates(rng, n, m) -> np.ndarray:
    x = np.empty((n, m, 3))
    x[..., 0] = rng.standard_normal((n, m))
    x[..., 1] = rng.standard_normal((n, m))
    x[..., 2] = rng.integers(0, 2, size=(n, m)).astype(float)
    return x


def scenario_features(x: np.ndarray, scenario: str) -> tuple[np.ndarray, tuple[str, ...]]:
    """Covariates as handed to the learners: identity for scenario A;
    scenario B replaces (X1, X2) with U1 = exp(-X1/2), U2 = X1/(1 + X2/2)."""
    if scenario == "A":
        return x, ("X1", "X2", "X3")
    u = x.copy()
    u[..., 0] = np.exp(-0.5 * x[..., 0])
    u[..., 1] = x[..., 0] / (1.0 + 0.5 * x[..., 1])
    return u, ("U1", "U2", "X3")


def generate_study(spec: DgpSpec) -> Dataset:
    """Draw one clustered study from the data-generating process.

    Scenario B only changes the covariate view stored on the dataset (what
    the learners will see), never the treatment or outcome law.
    """
    rng = np.random.default_rng(spec.seed)
    sizes = rng.choice(np.asarray(spec.size_support, dtype=np.int64), size=spec.n)
    records: list = [None] * spec.n
    for m in sorted(set(int(s) for s in sizes)):
        idx = np.flatnonzero(sizes == m)
        nm = idx.shape[0]
        x = _draw_covariates(rng, nm, m)
        pi = _margins_from_x(x, spec.ps_coefs)
        z = _equicorrelated_normals(rng, nm, m, spec.rho_a)
        a = (z > ndtri(1.0 - pi)).astype(np.int8)
        peer_mean = (a.sum(axis=1, keepdims=True) - a) / max(m - 1, 1)
        mu = _outcome_mean(a, peer_mean, x, spec.outcome_coefs)
        sd = np.sqrt(spec.outcome_var_base + spec.outcome_var_treated * a)
        w = _equicorrelated_normals(rng, nm, m, spec.rho_y)
        y = mu + sd * w
        feats, _ = scenario_features(x, spec.scenario)
        for row, i in enumerate(idx):
            records[i] = ClusterRecord(cluster_id=int(i + 1), covariates=feats[row],
                                       treatments=a[row], outcomes=y[row])
    _, names = scenario_features(np.zeros((1, 1, 3)), spec.scenario)
    return build_dataset(records, covariate_names=names)


@dataclass(frozen=True)
class TruthEntry:
    """One entry of the truth table, with its Monte Carlo standard error."""

    policy: PolicySpec
    t: EstimandKind
    q: float
    value: float
    n_super: int
    mc_se: float


def _policy_mass_batch(spec: PolicySpec, pi_table: np.ndarray, margins: np.ndarray,
                       m: int) -> np.ndarray:
    """H(a | X, M) for a batch of clusters of one size: (N, 2^M)."""
    vecs, _, _, s = _index_maps(m)
    if spec.kind == "dap":
        out = np.zeros_like(pi_table)
        out[:, -1 if spec.parameter == 1.0 else 0] = 1.0
        return out
    if spec.kind == "uap":
        alpha = spec.parameter
        mass = np.where(vecs == 1, alpha, 1.0 - alpha).prod(axis=1)
        return np.broadcast_to(mass, pi_table.shape).copy()
    if spec.kind == "ips":
        pdel = shifted_marginal(margins, spec.parameter)
        return np.exp(np.log(pdel) @ vecs.T.astype(float)
                      + np.log1p(-pdel) @ (1.0 - vecs.T.astype(float)))
    unnorm = spec.parameter ** s * pi_table
    return unnorm / unnorm.sum(axis=1, keepdims=True)


def _sample_rows(rng, prob_table: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a row-stochastic matrix."""
    cum = np.cumsum(prob_table, axis=1)
    u = rng.random(prob_table.shape[0]) * cum[:, -1]
    return (u[:, None] >= cum).sum(axis=1)


@dataclass
class _SizeGroup:
    m: int
    x: np.ndarray          # (N, m, 3)
    margins: np.ndarray    # (N, m)
    pi_table: np.ndarray   # (N, 2^m)


class TruthOracle:
    """Super-population evaluator of the policy-specific quantile estimands.

    One shared super-population (covariates, true margins, true cluster
    propensities) backs every (policy, t, q) query; sampling randomness is
    derived per query so results are reproducible call by call.
    """

    def __init__(self, spec: DgpSpec, n_super: int = 2_000_000, seed: int = 1,
                 nodes: int = 32, chunk: int = 100_000):
        if n_super < 100_000:
            raise ArgumentError("the truth oracle needs a super-population of at least 1e5 clusters")
        self.spec = spec
        self.n_super = int(n_super)
        self.seed = seed
        rng = np.random.default_rng([seed, 19])
        sizes = rng.choice(np.asarray(spec.size_support, dtype=np.int64), size=self.n_super)
        self.groups: list[_SizeGroup] = []
        for m in sorted(set(int(s) for s in sizes)):
            nm = int((sizes == m).sum())
            x = _draw_covariates(rng, nm, m)
            margins = _margins_from_x(x, spec.ps_coefs)
            table = np.empty((nm, 2 ** m))
            for lo in range(0, nm, chunk):
                hi = min(lo + chunk, nm)
                table[lo:hi] = cluster_ps_table(margins[lo:hi], spec.rho_a, nodes)
            self.groups.append(_SizeGroup(m=m, x=x, margins=margins, pi_table=table))

    def _query_rng(self, policy: PolicySpec, t: EstimandKind):
        kind_tag = ("dap", "uap", "ips", "cps").index(policy.kind)
        param_tag = int(np.float64(policy.parameter).view(np.int64))
        t_tag = list(EstimandKind).index(t)
        return np.random.default_rng([self.seed, 23, kind_tag, param_tag & 0xFFFFFFFF,
                                      param_tag >> 32 & 0xFFFFFFFF, t_tag])

    def sample_outcomes(self, policy: PolicySpec, t: EstimandKind) -> np.ndarray:
        """One policy-specific potential outcome per super-population cluster,
        for a uniformly sampled individual."""
        spec = self.spec
        rng = self._query_rng(policy, t)
        draws = []
        for g in self.groups:
            m, nm = g.m, g.x.shape[0]
            vecs, sib0, sib1, s = _index_maps(m)
            h = _policy_mass_batch(policy, g.pi_table, g.margins, m)
            j = rng.integers(0, m, size=nm)
            if t is EstimandKind.STAR:
                v = _sample_rows(rng, h)
                own = vecs[v, j].astype(float)
                peer_sum = s[v].astype(float) - own
            else:
                own = np.full(nm, float(t.fixed_arm))
                peer_sum = np.empty(nm)
                u = rng.random(nm)
                for jj in range(m):
                    rows = np.flatnonzero(j == jj)
                    if rows.size == 0:
                        continue
                    ins0 = np.flatnonzero(vecs[:, jj] == 0)
                    ins1 = ins0 + (1 << (m - 1 - jj))
                    hpeer = h[np.ix_(rows, ins0)] + h[np.ix_(rows, ins1)]
                    cum = np.cumsum(hpeer, axis=1)
                    pick = (u[rows, None] * cum[:, -1:] >= cum).sum(axis=1)
                    peer_sum[rows] = s[ins0[pick]]
            x_j = g.x[np.arange(nm), j]
            mu = _outcome_mean(own, peer_sum / max(m - 1, 1), x_j, spec.outcome_coefs)
            sd = np.sqrt(spec.outcome_var_base + spec.outcome_var_treated * own)
            draws.append(mu + sd * rng.standard_normal(nm))
        return np.concatenate(draws)

    def quantile(self, policy: PolicySpec, t: EstimandKind, q: float) -> TruthEntry:
        y = np.sort(self.sample_outcomes(policy, t))
        n = y.shape[0]
        k = max(int(math.ceil(q * n)) - 1, 0)
        value = float(y[k])
        # MC standard error of the sample quantile via a local density estimate.
        half = max(int(round(math.sqrt(n))), 10)
        lo, hi = max(k - half, 0), min(k + half, n - 1)
        dens = (hi - lo) / n / max(y[hi] - y[lo], 1e-12)
        mc_se = math.sqrt(q * (1.0 - q) / n) / dens
        return TruthEntry(policy=policy, t=t, q=q, value=value,
                          n_super=n, mc_se=float(mc_se))

    def cdf(self, policy: PolicySpec, t: EstimandKind, thetas) -> np.ndarray:
        """Closed-outcome-form CDF of the policy-specific potential outcome:
        the population average over individuals and treatment vectors of the
        policy mass times the conditional normal CDF. Monte Carlo only over
        covariates, so it cross-checks the sampling path."""
        from .estimators import _collapse_operator
        spec = self.spec
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        total = np.zeros(thetas.shape[0])
        n_total = 0
        for g in self.groups:
            m, nm = g.m, g.x.shape[0]
            n_total += nm
            n_peer = max(m - 1, 0) + 1
            h = _policy_mass_batch(policy, g.pi_table, g.margins, m)
            coll = (h @ _collapse_operator(m).T).reshape(nm, m, 2, n_peer)
            peer_levels = np.arange(n_peer) / max(m - 1, 1)
            for own in (0, 1):
                if t is not EstimandKind.STAR:
                    weights = (coll[:, :, 0, :] + coll[:, :, 1, :]) if own == t.fixed_arm else None
                    if weights is None:
                        continue
                else:
                    weights = coll[:, :, own, :]
                mu = _outcome_mean(float(own), peer_levels[None, None, :],
                                   g.x[:, :, None, :], spec.outcome_coefs)
                sd = math.sqrt(spec.outcome_var_base + spec.outcome_var_treated * own)
                for k, theta in enumerate(thetas):
                    total[k] += float(np.sum(weights * ndtr((theta - mu) / sd))) / m
        return total / n_total


def truth_oracle(spec: DgpSpec, policy: PolicySpec, t: EstimandKind, q: float,
                 n_super: int = 2_000_000, seed: int = 1) -> TruthEntry:
    """Functional wrapper over TruthOracle for a single estimand."""
    return TruthOracle(spec, n_super=n_super, seed=seed).quantile(policy, t, q)


@dataclass
class ReplicateConfig:
    """Monte Carlo replication settings."""

    replicates: int = 200
    n: int = 500
    scenario: str = "A"
    policies: tuple = (PolicySpec("cps", 1.0),)
    estimands: tuple = (EstimandKind.STAR, EstimandKind.FIX1, EstimandKind.FIX0)
    q: float = 0.5
    L: int = 3
    learner: str = "logistic"
    alpha: float = 0.05
    seed: int = 0
    n_super: int = 2_000_000
    truth_seed: int = 777
    workers: int = 1
    ipw_bootstrap: int = 500
    options: EstimatorOptions = field(default_factory=EstimatorOptions)

    def __post_init__(self):
        if self.replicates < 2:
            raise ArgumentError("need at least 2 replicates")


def _one_replicate(cfg: ReplicateConfig, r: int) -> dict:
    """Run both estimators on one simulated study; errors are recorded per
    estimand, not raised."""
    spec = DgpSpec(n=cfg.n, scenario=cfg.scenario, seed=[cfg.seed, 29, r])
    dataset = generate_study(spec)
    out: dict = {}
    opts = replace(cfg.options, ipw_bootstrap=cfg.ipw_bootstrap)
    try:
        nuis = build_nuisance(dataset, L=cfg.L, learner=cfg.learner, options=opts,
                              seed=cfg.seed * 100_003 + r)
    except Exception as exc:
        for policy in cfg.policies:
            for t in cfg.estimands:
                out[(policy.label(), t.value, "np")] = ("error", f"{type(exc).__name__}: {exc}")
                out[(policy.label(), t.value, "ipw")] = ("error", f"{type(exc).__name__}: {exc}")
        return out
    for policy in cfg.policies:
        for t in cfg.estimands:
            try:
                est = np_quantile_from_nuisance(nuis, t, cfg.q, policy)
                lo, hi = pointwise_ci(est, cfg.alpha)
                out[(policy.label(), t.value, "np")] = ("ok", est.theta_hat, lo, hi)
            except Exception as exc:
                out[(policy.label(), t.value, "np")] = ("error", f"{type(exc).__name__}: {exc}")
            try:
                est = ipw_quantile_crossfit(nuis, t, cfg.q, policy)
                lo, hi = est.diagnostics["ci_lo"], est.diagnostics["ci_hi"]
                out[(policy.label(), t.value, "ipw")] = ("ok", est.theta_hat, lo, hi)
            except Exception as exc:
                out[(policy.label(), t.value, "ipw")] = ("error", f"{type(exc).__name__}: {exc}")
    return out


def _aggregate(cfg: ReplicateConfig, results: list[dict], truths: dict) -> list[dict]:
    rows = []
    for policy in cfg.policies:
        for t in cfg.estimands:
            truth = truths[(policy.label(), t.value)]
            rmse = {}
            per_estimator = {}
            for estimator in ("ipw", "np"):
                key = (policy.label(), t.value, estimator)
                thetas, covered, failures, messages = [], [], 0, []
                for res in results:
                    rec = res[key]
                    if rec[0] != "ok":
                        failures += 1
                        messages.append(rec[1])
                        continue
                    _, theta, lo, hi = rec
                    thetas.append(theta)
                    covered.append(lo <= truth <= hi)
                thetas = np.asarray(thetas)
                ok = thetas.shape[0]
                stats = {
                    "bias": float(thetas.mean() - truth) if ok else math.nan,
                    "mcsd": float(thetas.std(ddof=1)) if ok > 1 else math.nan,
                    "coverage": float(100.0 * np.mean(covered)) if ok else math.nan,
                    "failures": failures,
                    "messages": messages[:3],
                }
                rmse[estimator] = float(np.sqrt(np.mean((thetas - truth) ** 2))) if ok else math.nan
                per_estimator[estimator] = stats
            ratio = rmse["np"] / rmse["ipw"] if rmse["ipw"] else math.nan
            for estimator in ("ipw", "np"):
                stats = per_estimator[estimator]
                invalid = stats["failures"] > 0.02 * cfg.replicates
                rows.append({
                    "estimator": estimator,
                    "policy_kind": policy.kind,
                    "parameter": policy.parameter,
                    "t": t.value,
                    "q": cfg.q,
                    "truth": truth,
                    "bias": stats["bias"],
                    "mcsd": stats["mcsd"],
                    "coverage": stats["coverage"],
                    "rmse_ratio": ratio,
                    "failures": stats["failures"],
                    "seed": cfg.seed,
                    "invalid": invalid,
                })
    return rows


def replicate(cfg: ReplicateConfig, truths: dict | None = None) -> list[dict]:
    """Monte Carlo study: bias, MCSD, coverage, and the NP/IPW RMSE ratio
    per (estimator, policy, estimand) row.

    ``truths`` maps (policy label, estimand value) to the true quantile;
    when omitted it is computed from the shared truth oracle.
    """
    if truths is None:
        oracle = TruthOracle(DgpSpec(n=cfg.n, scenario=cfg.scenario, seed=cfg.truth_seed),
                             n_super=cfg.n_super, seed=cfg.truth_seed)
        truths = {(policy.label(), t.value): oracle.quantile(policy, t, cfg.q).value
                  for policy in cfg.policies for t in cfg.estimands}
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_one_replicate, [cfg] * cfg.replicates,
                                    range(cfg.replicates), chunksize=1))
    else:
        results = [_one_replicate(cfg, r) for r in range(cfg.replicates)]
    return _aggregate(cfg, results, truths)
