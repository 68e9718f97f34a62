import numpy as np
import pytest

from dabench import errors
from dabench.core import (
    MASKED,
    DomainDataset,
    PredictionSet,
    accuracy,
    macro_f1,
    stratified_split,
)


def make_dataset(ns=6, nt=6):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(ns + nt, 2))
    y = np.array([0, 1] * ((ns + nt) // 2))
    dom = np.array([1] * ns + [-1] * nt)
    return DomainDataset(features=X, labels=y, domain=dom)


class TestDomainDataset:
    def test_views(self):
        ds = make_dataset()
        assert ds.n_source == 6 and ds.n_target == 6
        assert ds.source_features.shape == (6, 2)
        assert ds.source_labels.shape == (6,)

    def test_masked_only_on_target(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(4, 2))
        y = np.array([0, 1, MASKED, 1])
        dom = np.array([1, 1, -1, -1])
        ds = DomainDataset(features=X, labels=y, domain=dom)
        assert ds.target_labels[0] == MASKED
        with pytest.raises(errors.MaskedLabels):
            DomainDataset(features=X, labels=np.array([MASKED, 1, 0, 1]),
                          domain=dom)

    def test_rejects_nonfinite(self):
        X = np.array([[0.0, 1.0], [np.nan, 0.0]])
        with pytest.raises(errors.NonNumericFeature):
            DomainDataset(features=X, labels=[0, 1], domain=[1, -1])

    def test_needs_both_domains(self):
        X = np.zeros((3, 1))
        with pytest.raises(errors.EmptyDomain):
            DomainDataset(features=X, labels=[0, 1, 0], domain=[1, 1, 1])

    def test_immutable(self):
        ds = make_dataset()
        with pytest.raises(ValueError):
            ds.features[0, 0] = 9.0


class TestStratifiedSplit:
    def test_paper_example_one_of_each_class_in_test(self):
        labels = [0, 0, 1, 1, 0, 1, 0, 1, 0, 1]
        plan = stratified_split(labels, 0.8, 5, seed=0)
        y = np.asarray(labels)
        for tr, te in plan.repeats:
            assert len(te) == 2
            assert sorted(y[te].tolist()) == [0, 1]
            assert sorted(np.concatenate([tr, te]).tolist()) == list(range(10))
            assert np.intersect1d(tr, te).size == 0

    def test_single_class_degenerates_to_plain_split(self):
        plan = stratified_split([3] * 10, 0.8, 2, seed=1)
        for tr, te in plan.repeats:
            assert len(tr) == 8 and len(te) == 2

    def test_determinism(self):
        a = stratified_split([0, 1] * 20, 0.75, 4, seed=7)
        b = stratified_split([0, 1] * 20, 0.75, 4, seed=7)
        for (tr1, te1), (tr2, te2) in zip(a.repeats, b.repeats):
            assert np.array_equal(tr1, tr2) and np.array_equal(te1, te2)

    def test_repeats_differ(self):
        plan = stratified_split([0, 1] * 20, 0.8, 3, seed=0)
        tests = [tuple(te.tolist()) for _, te in plan.repeats]
        assert len(set(tests)) > 1

    def test_class_too_small(self):
        # the lonely class-1 sample gets the largest-remainder bump into the
        # test set, leaving no train member
        with pytest.raises(errors.ClassTooSmall):
            stratified_split([0, 0, 1], 1 / 3, 1, seed=0)

    def test_invalid_ratio(self):
        with pytest.raises(errors.InvalidRatio):
            stratified_split([0, 1], 1.2, 1, seed=0)

    def test_stratification_within_one_sample(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 3, size=61)
        plan = stratified_split(labels, 0.8, 5, seed=2)
        y = np.asarray(labels)
        for tr, te in plan.repeats:
            for cls in np.unique(y):
                ideal = np.sum(y == cls) * 0.2
                got = np.sum(y[te] == cls)
                assert abs(got - ideal) <= 1.0


class TestMetrics:
    def test_accuracy_examples(self):
        assert accuracy([1, 0, 1], [1, 0, 1]) == 1.0
        assert accuracy([1, 0, 1], [0, 1, 0]) == 0.0
        assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75

    def test_accuracy_identity_property(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            y = rng.integers(0, 4, size=20)
            assert accuracy(y, y) == 1.0

    def test_accuracy_errors(self):
        with pytest.raises(errors.LengthMismatch):
            accuracy([1, 0], [1])
        with pytest.raises(errors.MaskedLabels):
            accuracy([MASKED, 1], [0, 1])

    def test_macro_f1_hand_case(self):
        # binary [1,1,0,0] vs [1,0,0,0]: F1(1)=2/3, F1(0)=4/5
        got = macro_f1([1, 1, 0, 0], [1, 0, 0, 0])
        assert got == pytest.approx((2 / 3 + 4 / 5) / 2, abs=1e-12)

    def test_macro_f1_perfect_and_all_wrong(self):
        assert macro_f1([0, 1, 2], [0, 1, 2]) == 1.0
        assert macro_f1([0, 1, 0, 1], [1, 0, 1, 0]) == 0.0

    def test_macro_f1_declared_class_set(self):
        # class 2 absent from both vectors only counts when declared
        assert macro_f1([0, 1], [0, 1]) == 1.0
        got = macro_f1([0, 1], [0, 1], classes=[0, 1, 2])
        assert got == pytest.approx(2 / 3)

    def test_macro_f1_relabel_invariance(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 3, size=30)
        p = rng.integers(0, 3, size=30)
        remap = {0: 2, 1: 0, 2: 1}
        y2 = np.vectorize(remap.get)(y)
        p2 = np.vectorize(remap.get)(p)
        assert macro_f1(y, p) == pytest.approx(macro_f1(y2, p2))


class TestPredictionSet:
    def test_invariants(self):
        with pytest.raises(errors.InvalidSpec):
            PredictionSet(probabilities=[[0.5, 0.6]], classes=[0, 1])
        with pytest.raises(errors.InvalidSpec):
            PredictionSet(probabilities=[[1.0]], classes=[0])

    def test_hard_labels_tie_to_lowest_class(self):
        ps = PredictionSet(probabilities=[[0.5, 0.5]], classes=[3, 7])
        assert ps.hard_labels()[0] == 3
