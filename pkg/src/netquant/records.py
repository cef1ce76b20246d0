"""Core data records: clusters, datasets, estimand tags, and fold plans.

Everything here is immutable after construction so records can be shared
freely across parallel estimation tasks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, CapacityError, DatasetValidationError

MAX_CLUSTER_SIZE = 15


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class EstimandKind(enum.Enum):
    """Whether the randomly sampled individual's own treatment is policy-drawn
    (STAR) or pinned to an arm (FIX0 / FIX1)."""

    STAR = "star"
    FIX0 = "0"
    FIX1 = "1"

    @property
    def fixed_arm(self):
        """0 or 1 for the pinned-arm estimands, None for STAR."""
        return {EstimandKind.STAR: None, EstimandKind.FIX0: 0, EstimandKind.FIX1: 1}[self]

    @classmethod
    def parse(cls, label) -> "EstimandKind":
        key = str(label).strip().lower()
        table = {"star": cls.STAR, "*": cls.STAR, "0": cls.FIX0, "fix0": cls.FIX0,
                 "1": cls.FIX1, "fix1": cls.FIX1}
        if key not in table:
            raise ArgumentError(f"unknown estimand kind {label!r}; use star, 0, or 1")
        return table[key]


@dataclass(frozen=True)
class ClusterRecord:
    """One cluster: covariate matrix (M x d), binary treatment vector, and
    outcome vector, all aligned by individual index."""

    cluster_id: object
    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "covariates", _readonly(np.atleast_2d(np.asarray(self.covariates, dtype=float))))
        object.__setattr__(self, "treatments", _readonly(np.asarray(self.treatments, dtype=np.int8).ravel()))
        object.__setattr__(self, "outcomes", _readonly(np.asarray(self.outcomes, dtype=float).ravel()))

    @property
    def size(self) -> int:
        return self.treatments.shape[0]

    def violations(self) -> list[str]:
        """Invariant violations for this cluster, empty if well formed."""
        out = []
        m = self.size
        if m < 1:
            out.append(f"cluster {self.cluster_id}: size must be >= 1")
            return out
        if self.covariates.shape[0] != m:
            out.append(f"cluster {self.cluster_id}: covariates have {self.covariates.shape[0]} rows, expected {m}")
        if self.outcomes.shape[0] != m:
            out.append(f"cluster {self.cluster_id}: outcomes have {self.outcomes.shape[0]} entries, expected {m}")
        if not np.isin(self.treatments, (0, 1)).all():
            out.append(f"cluster {self.cluster_id}: treatments must be 0/1")
        if not np.isfinite(self.outcomes).all():
            out.append(f"cluster {self.cluster_id}: outcomes must be finite")
        if not np.isfinite(self.covariates).all():
            out.append(f"cluster {self.cluster_id}: covariates must be finite")
        return out


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample of clusters sharing one covariate dimension."""

    clusters: tuple[ClusterRecord, ...]
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_individuals(self) -> int:
        return sum(c.size for c in self.clusters)

    @property
    def covariate_dim(self) -> int:
        return len(self.covariate_names)

    @property
    def max_cluster_size(self) -> int:
        return max(c.size for c in self.clusters)

    def pooled_outcomes(self) -> np.ndarray:
        return np.concatenate([c.outcomes for c in self.clusters])

    def subset(self, indices) -> "Dataset":
        return Dataset(tuple(self.clusters[i] for i in indices), self.covariate_names)


def validate_clusters(clusters) -> list[str]:
    """Collect every invariant violation over a raw cluster list.

    Returns the (possibly empty) report; does not raise.
    """
    report = []
    if len(clusters) == 0:
        report.append("dataset: at least one cluster is required")
        return report
    seen = set()
    dims = {}
    for c in clusters:
        report.extend(c.violations())
        if c.cluster_id in seen:
            report.append(f"cluster {c.cluster_id}: duplicate cluster_id")
        seen.add(c.cluster_id)
        dims.setdefault(c.covariates.shape[1], c.cluster_id)
    if len(dims) > 1:
        detail = ", ".join(f"d={d} (first: cluster {cid})" for d, cid in sorted(dims.items()))
        report.append(f"dataset: clusters disagree on covariate dimension: {detail}")
    return report


def build_dataset(clusters, covariate_names=None) -> Dataset:
    """Validate raw clusters and assemble a Dataset.

    Raises DatasetValidationError carrying the full diagnostic report when
    any invariant is violated; raises ArgumentError on empty input.
    """
    clusters = list(clusters)
    if not clusters:
        raise ArgumentError("cannot build a dataset from zero clusters")
    report = validate_clusters(clusters)
    if report:
        raise DatasetValidationError(report)
    d = clusters[0].covariates.shape[1]
    if covariate_names is None:
        covariate_names = tuple(f"X{k + 1}" for k in range(d))
    if len(covariate_names) != d:
        raise ArgumentError(f"{len(covariate_names)} covariate names for dimension {d}")
    return Dataset(tuple(clusters), tuple(covariate_names))


@lru_cache(maxsize=64)
def enumerate_treatment_vectors(m: int, cap: int = MAX_CLUSTER_SIZE) -> np.ndarray:
    """All 2^m binary treatment vectors in lexicographic order, as a
    read-only (2^m, m) int8 array.

    The lexicographic order is fixed package-wide so that sums over the
    treatment support are order-deterministic everywhere.
    """
    if m < 1:
        raise ArgumentError(f"cluster size must be >= 1, got {m}")
    if m > cap:
        raise CapacityError(m, cap)
    codes = np.arange(2 ** m, dtype=np.int64)
    vecs = (codes[:, None] >> np.arange(m - 1, -1, -1)) & 1
    return _readonly(vecs.astype(np.int8))


@dataclass(frozen=True)
class FoldPlan:
    """Three-way cross-fitting index sets.

    For each fold label l (1-based), ``eval_sets[l-1]`` is the held-out
    evaluation fold D_l, ``ipw_sets[l-1]`` the indices allowed for the
    initial quantile step, and ``outcome_sets[l-1]`` the indices allowed
    for the threshold-outcome regression.
    """

    n: int
    L: int
    seed: int
    assignment: np.ndarray            # cluster index -> fold label in {1..L}
    eval_sets: tuple[np.ndarray, ...]
    ipw_sets: tuple[np.ndarray, ...]
    outcome_sets: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", _readonly(self.assignment))
        object.__setattr__(self, "eval_sets", tuple(_readonly(a) for a in self.eval_sets))
        object.__setattr__(self, "ipw_sets", tuple(_readonly(a) for a in self.ipw_sets))
        object.__setattr__(self, "outcome_sets", tuple(_readonly(a) for a in self.outcome_sets))


def partition_folds(n: int, L: int, seed: int) -> FoldPlan:
    """Random L-fold partition plus the two training index sets per fold.

    Clusters are shuffled with a generator seeded by ``seed`` and dealt
    round-robin, so fold sizes differ by at most one. Fold l's training
    sets are unions of whole folds: with half = floor(L/2) and
    l' = 1{l <= half}, the quantile-step set is folds 1..half+l' minus
    fold l, and the outcome-regression set is folds half+l'+1..L minus
    fold l.
    """
    if L < 3:
        raise ArgumentError(f"need at least 3 folds, got L={L}")
    if n < L:
        raise ArgumentError(f"need n >= L clusters, got n={n} < L={L}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % L + 1
    folds = [np.flatnonzero(assignment == l) for l in range(1, L + 1)]

    half = L // 2
    ipw_sets, outcome_sets = [], []
    for l in range(1, L + 1):
        lp = 1 if l <= half else 0
        first = [k for k in range(1, half + lp + 1) if k != l]
        second = [k for k in range(half + lp + 1, L + 1) if k != l]
        ipw_sets.append(np.sort(np.concatenate([folds[k - 1] for k in first])))
        outcome_sets.append(np.sort(np.concatenate([folds[k - 1] for k in second])))
    return FoldPlan(n=n, L=L, seed=seed, assignment=assignment,
                    eval_sets=tuple(folds), ipw_sets=tuple(ipw_sets),
                    outcome_sets=tuple(outcome_sets))
