import numpy as np
import pytest

from netquant.policies import ClusterPropensityView, PolicySpec
from netquant.records import ClusterRecord, build_dataset, enumerate_treatment_vectors


def random_view(rng, m, concentration=2.0) -> ClusterPropensityView:
    """A random strictly-positive joint treatment distribution."""
    joint = rng.dirichlet(np.full(2 ** m, concentration))
    joint = np.clip(joint, 1e-9, None)
    return ClusterPropensityView(joint / joint.sum())


def random_policy(rng) -> PolicySpec:
    kind = ("dap", "uap", "ips", "cps")[rng.integers(0, 4)]
    par = {"dap": float(rng.integers(0, 2)),
           "uap": float(rng.uniform(0.1, 0.9)),
           "ips": float(rng.uniform(0.3, 3.0)),
           "cps": float(rng.uniform(0.3, 3.0))}[kind]
    return PolicySpec(kind, par)


def random_cluster(rng, m, cid=0) -> ClusterRecord:
    return ClusterRecord(cluster_id=cid,
                         covariates=rng.normal(size=(m, 2)),
                         treatments=rng.integers(0, 2, size=m),
                         outcomes=rng.normal(size=m))


def small_random_dataset(rng, n=8, m_max=3):
    clusters = [random_cluster(rng, int(rng.integers(1, m_max + 1)), cid=i)
                for i in range(n)]
    return build_dataset(clusters)


def scan_weighted_quantile(y, w, q):
    """Independent step-function oracle: smallest observed y whose
    cumulative weight of {Y <= y} reaches q times the total weight."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    total = w.sum()
    for candidate in np.sort(np.unique(y)):
        if w[y <= candidate].sum() >= q * total:
            return float(candidate)
    return float(np.max(y))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
