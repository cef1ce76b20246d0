"""Treatment-allocation policies over a cluster's joint treatment vector.

Four policies are provided:

* ``dap``  — deterministic: everyone gets arm ``a`` (parameter 0 or 1);
* ``uap``  — each individual treated independently with probability alpha;
* ``ips``  — every individual's treatment odds multiplied by delta;
* ``cps``  — the cluster-level odds of one additional treated member
  multiplied by delta, preserving within-cluster dependence.

All evaluators are pure functions of a :class:`ClusterPropensityView`, so
true propensities (simulation oracles) and estimated ones (nuisance fits)
share a single code path. Vectors are indexed by the package-wide
lexicographic order from :func:`netquant.records.enumerate_treatment_vectors`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, PositivityError
from .records import EstimandKind, enumerate_treatment_vectors

POLICY_KINDS = ("dap", "uap", "ips", "cps")

# Masses and marginals this close to 0/1 make the incremental policies'
# divisions meaningless; fail rather than clamp (truncation, when wanted,
# is an explicit estimator option).
POSITIVITY_EPS = 1e-12


@dataclass(frozen=True)
class PolicySpec:
    """A policy kind plus its single hyperparameter."""

    kind: str
    parameter: float

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "parameter", float(self.parameter))
        if kind not in POLICY_KINDS:
            raise ArgumentError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        p = self.parameter
        if kind == "dap" and p not in (0.0, 1.0):
            raise ArgumentError(f"dap parameter must be 0 or 1, got {p}")
        if kind == "uap" and not (0.0 <= p <= 1.0):
            raise ArgumentError(f"uap parameter must lie in [0, 1], got {p}")
        if kind in ("ips", "cps") and not p > 0.0:
            raise ArgumentError(f"{kind} parameter must be positive, got {p}")

    @property
    def depends_on_propensity(self) -> bool:
        return self.kind in ("ips", "cps")

    def label(self) -> str:
        return f"{self.kind}({self.parameter:g})"

    @classmethod
    def parse(cls, text) -> "PolicySpec":
        """Parse 'kind:parameter' strings, e.g. 'cps:0.5' or 'dap:1'."""
        if isinstance(text, PolicySpec):
            return text
        parts = str(text).split(":")
        if len(parts) != 2:
            raise ArgumentError(f"policy must look like 'kind:parameter', got {text!r}")
        try:
            return cls(parts[0], float(parts[1]))
        except ValueError as exc:
            raise ArgumentError(f"bad policy parameter in {text!r}: {exc}") from exc


@lru_cache(maxsize=64)
def _index_maps(m: int):
    """Bit-manipulation tables for clusters of size m.

    ``sib0[j, v]`` / ``sib1[j, v]`` give the vector index obtained from
    vector v by forcing individual j's bit to 0 / 1; ``s`` counts treated
    individuals per vector.
    """
    vecs = enumerate_treatment_vectors(m)
    n_vec = vecs.shape[0]
    codes = np.arange(n_vec, dtype=np.int64)
    bits = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)   # bit weight of individual j
    sib0 = codes[None, :] & ~bits[:, None]
    sib1 = codes[None, :] | bits[:, None]
    s = vecs.sum(axis=1).astype(np.int64)
    return vecs, sib0, sib1, s


def _vector_index(a) -> int:
    a = np.asarray(a).ravel()
    if not np.isin(a, (0, 1)).all():
        raise ArgumentError("treatment vectors must be 0/1")
    idx = 0
    for bit in a:
        idx = (idx << 1) | int(bit)
    return idx


@dataclass(frozen=True)
class ClusterPropensityView:
    """Joint treatment-vector probabilities for one cluster.

    ``joint[v]`` is pi(a_v | X, M) in lexicographic vector order; the
    per-individual marginals are derived from the joint so the two are
    consistent by construction.
    """

    joint: np.ndarray

    def __post_init__(self):
        joint = np.asarray(self.joint, dtype=float).ravel()
        joint.setflags(write=False)
        object.__setattr__(self, "joint", joint)
        n_vec = joint.shape[0]
        m = int(round(np.log2(n_vec)))
        if 2 ** m != n_vec:
            raise ArgumentError(f"joint length {n_vec} is not a power of two")
        object.__setattr__(self, "_m", m)
        vecs = enumerate_treatment_vectors(m)
        marginals = vecs.T.astype(float) @ joint
        marginals.setflags(write=False)
        object.__setattr__(self, "_marginals", marginals)

    @property
    def size(self) -> int:
        return self._m

    @property
    def marginals(self) -> np.ndarray:
        """pi_ij = P(A_ij = 1 | X, M), implied by the joint."""
        return self._marginals

    def validate(self, atol: float = 1e-8) -> None:
        if np.any(self.joint <= 0.0) or np.any(self.joint >= 1.0):
            raise ArgumentError("joint vector probabilities must lie strictly in (0, 1)")
        if abs(self.joint.sum() - 1.0) > atol:
            raise ArgumentError(f"joint probabilities sum to {self.joint.sum():.12f}, not 1")

    def mass(self, a) -> float:
        return float(self.joint[_vector_index(a)])

    @classmethod
    def from_product(cls, marginals) -> "ClusterPropensityView":
        """Independent-treatment view: joint is the product of Bernoulli margins."""
        p = np.asarray(marginals, dtype=float).ravel()
        vecs = enumerate_treatment_vectors(p.shape[0]).astype(float)
        joint = np.prod(np.where(vecs == 1, p, 1.0 - p), axis=1)
        return cls(joint)


def shifted_marginal(pi: np.ndarray, delta: float) -> np.ndarray:
    """Individual propensity after multiplying treatment odds by delta."""
    return delta * pi / (1.0 - pi + delta * pi)


def _check_marginals_interior(pi: np.ndarray, context: str) -> None:
    if np.any(pi <= POSITIVITY_EPS) or np.any(pi >= 1.0 - POSITIVITY_EPS):
        raise PositivityError(f"{context}: individual propensity at 0 or 1 (min={pi.min():.3g}, max={pi.max():.3g})")


def policy_mass_table(spec: PolicySpec, ps: ClusterPropensityView) -> np.ndarray:
    """H(a | X, M) for every a in lexicographic order, as a (2^M,) array."""
    m = ps.size
    vecs, _, _, s = _index_maps(m)
    if spec.kind == "dap":
        out = np.zeros(vecs.shape[0])
        out[-1 if spec.parameter == 1.0 else 0] = 1.0
        return out
    if spec.kind == "uap":
        alpha = spec.parameter
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(vecs == 1, alpha, 1.0 - alpha).prod(axis=1)
        return out
    if spec.kind == "ips":
        pi = ps.marginals
        _check_marginals_interior(pi, "ips policy")
        pdel = shifted_marginal(pi, spec.parameter)
        return np.prod(np.where(vecs == 1, pdel, 1.0 - pdel), axis=1)
    # cps
    joint = ps.joint
    if np.any(joint <= POSITIVITY_EPS):
        raise PositivityError("cps policy: cluster propensity has a zero-mass vector")
    unnorm = spec.parameter ** s * joint
    total = unnorm.sum()
    if total <= POSITIVITY_EPS:
        raise PositivityError("cps policy: normalizer is zero")
    return unnorm / total


def policy_mass(spec: PolicySpec, a, ps: ClusterPropensityView) -> float:
    """H(a | X, M) for one treatment vector."""
    if len(np.asarray(a).ravel()) != ps.size:
        raise ArgumentError("treatment vector length does not match the propensity view")
    return float(policy_mass_table(spec, ps)[_vector_index(a)])


def peer_mass_table(h: np.ndarray, m: int) -> np.ndarray:
    """Own-treatment-marginalized policy mass, H(a_(-j) | X, M), indexed by
    full vectors: entry [j, v] equals H(0, a_(-j)) + H(1, a_(-j)) where
    a_(-j) is vector v with individual j removed."""
    _, sib0, sib1, _ = _index_maps(m)
    return h[sib0] + h[sib1]


def weight_w_table(spec: PolicySpec, t: EstimandKind, ps: ClusterPropensityView,
                   h: np.ndarray | None = None) -> np.ndarray:
    """Estimand weights w^(t)_ij(a) as an (M, 2^M) array.

    Row j gives the weight attached to individual j for every treatment
    vector: the policy mass itself for STAR, and the own-arm indicator
    times the peer-marginalized mass for the pinned-arm estimands.
    """
    m = ps.size
    if h is None:
        h = policy_mass_table(spec, ps)
    if t is EstimandKind.STAR:
        return np.broadcast_to(h, (m, h.shape[0])).copy()
    vecs, _, _, _ = _index_maps(m)
    arm = t.fixed_arm
    hpeer = peer_mass_table(h, m)
    return np.where(vecs.T == arm, hpeer, 0.0)


def weight_w(spec: PolicySpec, t: EstimandKind, j: int, a, ps: ClusterPropensityView) -> float:
    """w^(t)_ij(a, X, M) for one individual (1-based j) and vector."""
    m = ps.size
    if not 1 <= j <= m:
        raise ArgumentError(f"individual index {j} out of range 1..{m}")
    return float(weight_w_table(spec, t, ps)[j - 1, _vector_index(a)])


def cond_eif_omega_table(spec: PolicySpec, a_obs, ps: ClusterPropensityView,
                         h: np.ndarray | None = None) -> np.ndarray:
    """Conditional EIF of the policy mass, Omega(A_obs, X, M; a), for all
    target vectors a at once.

    Zero for dap/uap (the policy does not depend on the data); closed
    forms for ips and cps. Has conditional mean zero over A_obs ~ pi.
    """
    m = ps.size
    vecs, _, _, _ = _index_maps(m)
    n_vec = vecs.shape[0]
    a_obs = np.asarray(a_obs, dtype=np.int8).ravel()
    if a_obs.shape[0] != m:
        raise ArgumentError("observed treatment vector length does not match the propensity view")
    if spec.kind in ("dap", "uap"):
        return np.zeros(n_vec)
    if h is None:
        h = policy_mass_table(spec, ps)

    if spec.kind == "ips":
        delta = spec.parameter
        pi = ps.marginals
        _check_marginals_interior(pi, "ips conditional EIF")
        pdel = shifted_marginal(pi, delta)
        denom_sq = (delta * pi + 1.0 - pi) ** 2
        resid = a_obs - pi
        # Per-individual contribution at own-bit b: (2b-1) delta resid_j /
        # (pdel_j^b (1-pdel_j)^(1-b) denom_sq_j); assemble over vectors as
        # a constant plus a matmul against the bit matrix.
        c0 = -delta * resid / ((1.0 - pdel) * denom_sq)
        c1 = delta * resid / (pdel * denom_sq)
        inner = c0.sum() + vecs.astype(float) @ (c1 - c0)
        return h * inner

    # cps
    joint = ps.joint
    obs_idx = _vector_index(a_obs)
    pi_obs = joint[obs_idx]
    if pi_obs <= POSITIVITY_EPS:
        raise PositivityError("cps conditional EIF: observed vector has zero propensity")
    out = -h * (h[obs_idx] / pi_obs)
    out[obs_idx] += h[obs_idx] / pi_obs
    return out


def cond_eif_omega(spec: PolicySpec, a_obs, a_target, ps: ClusterPropensityView) -> float:
    """Omega(A_obs, X, M; a_target) for a single target vector."""
    return float(cond_eif_omega_table(spec, a_obs, ps)[_vector_index(a_target)])


def cond_eif_omega_t_table(spec: PolicySpec, t: EstimandKind, a_obs,
                           ps: ClusterPropensityView,
                           omega: np.ndarray | None = None) -> np.ndarray:
    """Estimand-mapped conditional EIF component Omega^(t)_ij as (M, 2^M).

    STAR passes Omega through for every individual; the pinned-arm map
    puts, on vectors with a_ij = 0, the sum of Omega over both values of
    individual j's own bit, and zero elsewhere.
    """
    m = ps.size
    if omega is None:
        omega = cond_eif_omega_table(spec, a_obs, ps)
    if t is EstimandKind.STAR:
        return np.broadcast_to(omega, (m, omega.shape[0])).copy()
    vecs, sib0, sib1, _ = _index_maps(m)
    paired = omega[sib0] + omega[sib1]
    return np.where(vecs.T == 0, paired, 0.0)


def cond_eif_omega_t(spec: PolicySpec, t: EstimandKind, j: int, a_obs, a,
                     ps: ClusterPropensityView) -> float:
    """Omega^(t)_ij(A_obs, X, M; a) for one individual (1-based j)."""
    m = ps.size
    if not 1 <= j <= m:
        raise ArgumentError(f"individual index {j} out of range 1..{m}")
    return float(cond_eif_omega_t_table(spec, t, a_obs, ps)[j - 1, _vector_index(a)])
