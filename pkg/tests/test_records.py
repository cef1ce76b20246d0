import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netquant.errors import ArgumentError, CapacityError, DatasetValidationError
from netquant.records import (ClusterRecord, EstimandKind, build_dataset,
                              enumerate_treatment_vectors, partition_folds,
                              validate_clusters)


class TestEnumeration:
    def test_m1(self):
        assert enumerate_treatment_vectors(1).tolist() == [[0], [1]]

    def test_m2_lexicographic(self):
        assert enumerate_treatment_vectors(2).tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_m3_cardinality_distinct(self):
        vecs = enumerate_treatment_vectors(3)
        assert vecs.shape == (8, 3)
        assert len({tuple(v) for v in vecs.tolist()}) == 8

    @pytest.mark.parametrize("m", range(1, 13))
    def test_no_duplicates_up_to_12(self, m):
        vecs = enumerate_treatment_vectors(m)
        assert vecs.shape[0] == 2 ** m
        assert len({tuple(v) for v in vecs.tolist()}) == 2 ** m

    def test_cap_error_names_cap(self):
        with pytest.raises(CapacityError) as err:
            enumerate_treatment_vectors(16)
        assert "15" in str(err.value)

    def test_read_only(self):
        with pytest.raises(ValueError):
            enumerate_treatment_vectors(3)[0, 0] = 1


def _check_plan_invariants(plan):
    n, L = plan.n, plan.L
    all_idx = np.sort(np.concatenate(plan.eval_sets))
    assert all_idx.tolist() == list(range(n))
    sizes = [len(s) for s in plan.eval_sets]
    assert max(sizes) - min(sizes) <= 1
    half = L // 2
    for l in range(1, L + 1):
        d = set(plan.eval_sets[l - 1].tolist())
        i1 = set(plan.ipw_sets[l - 1].tolist())
        i2 = set(plan.outcome_sets[l - 1].tolist())
        assert not (i1 & i2) and not (i1 & d) and not (i2 & d)
        assert i1 | i2 | d == set(range(n))
        # recompute the index-set definition independently from fold labels
        lp = 1 if l <= half else 0
        first = set().union(*[set(plan.eval_sets[k - 1].tolist())
                              for k in range(1, half + lp + 1) if k != l])
        second = set().union(*[set(plan.eval_sets[k - 1].tolist())
                               for k in range(half + lp + 1, L + 1) if k != l])
        assert i1 == first
        assert i2 == second


class TestFoldPlan:
    def test_five_fold_first_fold_sets(self):
        # with L=5 and l=1: quantile set is folds 2-3, outcome set folds 4-5
        plan = partition_folds(23, 5, seed=0)
        d = plan.eval_sets
        assert set(plan.ipw_sets[0].tolist()) == set(np.concatenate([d[1], d[2]]).tolist())
        assert set(plan.outcome_sets[0].tolist()) == set(np.concatenate([d[3], d[4]]).tolist())

    def test_five_fold_fourth_fold_sets(self):
        plan = partition_folds(23, 5, seed=1)
        d = plan.eval_sets
        assert set(plan.ipw_sets[3].tolist()) == set(np.concatenate([d[0], d[1]]).tolist())
        assert set(plan.outcome_sets[3].tolist()) == set(np.concatenate([d[2], d[4]]).tolist())

    def test_three_fold_first_fold_sets(self):
        plan = partition_folds(9, 3, seed=5)
        d = plan.eval_sets
        assert plan.ipw_sets[0].tolist() == sorted(d[1].tolist())
        assert plan.outcome_sets[0].tolist() == sorted(d[2].tolist())

    def test_arg_errors(self):
        with pytest.raises(ArgumentError):
            partition_folds(10, 2, seed=0)
        with pytest.raises(ArgumentError):
            partition_folds(2, 3, seed=0)

    def test_deterministic(self):
        a = partition_folds(40, 5, seed=9)
        b = partition_folds(40, 5, seed=9)
        assert a.assignment.tolist() == b.assignment.tolist()
        c = partition_folds(40, 5, seed=10)
        assert a.assignment.tolist() != c.assignment.tolist()

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(3, 80), L=st.integers(3, 8), seed=st.integers(0, 10_000))
    def test_invariants_random(self, n, L, seed):
        if n < L:
            with pytest.raises(ArgumentError):
                partition_folds(n, L, seed)
            return
        _check_plan_invariants(partition_folds(n, L, seed))


def _cluster(cid=1, m=3, a=None, y=None, d=2):
    rng = np.random.default_rng(cid)
    return ClusterRecord(cluster_id=cid,
                         covariates=rng.normal(size=(m, d)),
                         treatments=np.zeros(m, dtype=int) if a is None else a,
                         outcomes=np.zeros(m) if y is None else y)


class TestValidation:
    def test_two_well_formed(self):
        ds = build_dataset([_cluster(1), _cluster(2)])
        assert ds.n_clusters == 2
        assert ds.covariate_dim == 2

    def test_bad_treatment_reported(self):
        bad = _cluster(7, a=np.array([0, 2, 1]))
        report = validate_clusters([_cluster(1), bad])
        assert any("7" in r and "treatment" in r for r in report)

    def test_duplicate_id_reported(self):
        report = validate_clusters([_cluster(3), _cluster(3)])
        assert any("duplicate" in r for r in report)

    def test_nonfinite_outcome_reported(self):
        bad = _cluster(5, y=np.array([0.0, np.inf, 1.0]))
        report = validate_clusters([bad])
        assert any("finite" in r for r in report)

    def test_mixed_dimension_reported(self):
        report = validate_clusters([_cluster(1, d=2), _cluster(2, d=3)])
        assert any("dimension" in r for r in report)

    def test_empty_input_is_argument_error(self):
        with pytest.raises(ArgumentError):
            build_dataset([])

    def test_build_raises_with_report(self):
        with pytest.raises(DatasetValidationError) as err:
            build_dataset([_cluster(3), _cluster(3)])
        assert err.value.report

    def test_records_immutable(self):
        c = _cluster(1)
        with pytest.raises(ValueError):
            c.outcomes[0] = 5.0


class TestEstimandKind:
    def test_parse(self):
        assert EstimandKind.parse("star") is EstimandKind.STAR
        assert EstimandKind.parse("0") is EstimandKind.FIX0
        assert EstimandKind.parse("1") is EstimandKind.FIX1
        with pytest.raises(ArgumentError):
            EstimandKind.parse("2")

    def test_fixed_arm(self):
        assert EstimandKind.STAR.fixed_arm is None
        assert EstimandKind.FIX0.fixed_arm == 0
        assert EstimandKind.FIX1.fixed_arm == 1
