import numpy as np
import pytest
from numpy.testing import assert_allclose

from feddadil.barycenter import barycenter_operator, free_support_barycenter
from feddadil.dictionary import Dictionary
from feddadil.ot import LabeledMeasure, project_rows_to_simplex, squared_w2


def blob_measure(rng, n, d, n_classes, center_scale=3.0):
    centers = center_scale * rng.standard_normal((n_classes, d))
    hard = rng.integers(0, n_classes, size=n)
    feats = centers[hard] + 0.3 * rng.standard_normal((n, d))
    labels = np.zeros((n, n_classes))
    labels[np.arange(n), hard] = 1.0
    return LabeledMeasure(feats, labels)


class TestSingleAtomReproduction:
    def test_objective_vanishes(self):
        rng = np.random.default_rng(0)
        atom = blob_measure(rng, 12, 3, 2)
        result = free_support_barycenter([atom], [1.0], beta=1.0, seed=1)
        assert result.objective_trace[-1] < 1e-10
        assert squared_w2(result.support, atom) < 1e-5

    def test_unit_weight_via_operator(self):
        rng = np.random.default_rng(1)
        atoms = [blob_measure(rng, 10, 2, 2) for _ in range(3)]
        dictionary = Dictionary(tuple(atoms))
        for k in range(3):
            alpha = np.zeros(3)
            alpha[k] = 1.0
            result = barycenter_operator(dictionary, alpha, beta=1.0, seed=k)
            assert squared_w2(result.support, atoms[k]) < 1e-5

    def test_uniform_weights_over_identical_atoms(self):
        rng = np.random.default_rng(2)
        atom = blob_measure(rng, 8, 2, 2)
        result = free_support_barycenter([atom, atom, atom], np.full(3, 1 / 3), seed=5)
        assert squared_w2(result.support, atom) < 1e-5


class TestClosedFormCases:
    def test_two_single_points_midpoint(self):
        a = LabeledMeasure([[0.0]], [[1.0]])
        b = LabeledMeasure([[2.0]], [[1.0]])
        result = free_support_barycenter([a, b], [0.5, 0.5], n_support=1, seed=0)
        assert_allclose(result.support.features, [[1.0]], atol=1e-9)

    def test_weighted_interpolation_of_matched_pairs(self):
        # two 2-point measures on a line with identical labels: the
        # barycenter support is the weighted average of matched pairs
        a = LabeledMeasure([[0.0], [10.0]], [[1.0, 0.0], [0.0, 1.0]])
        b = LabeledMeasure([[2.0], [12.0]], [[1.0, 0.0], [0.0, 1.0]])
        result = free_support_barycenter([a, b], [0.25, 0.75], beta=10.0, seed=3)
        got = np.sort(result.support.features.ravel())
        # matched pairs (0,2) and (10,12): 0.25*0 + 0.75*2 = 1.5; 0.25*10 + 0.75*12 = 11.5
        assert_allclose(got, [1.5, 11.5], atol=1e-8)


class TestObjectiveTrace:
    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(7)
        for seed in range(5):
            atoms = [blob_measure(rng, 15, 3, 3) for _ in range(2)]
            result = free_support_barycenter(atoms, [0.5, 0.5], beta=1.0, seed=seed)
            trace = result.objective_trace
            assert np.all(np.diff(trace) <= 1e-7)

    def test_trace_records_iterations(self):
        rng = np.random.default_rng(8)
        atoms = [blob_measure(rng, 6, 2, 2) for _ in range(2)]
        result = free_support_barycenter(atoms, [0.5, 0.5], max_iter=3, tol=0.0, seed=0)
        assert result.n_iterations <= 3
        assert len(result.objective_trace) == result.n_iterations + 1


class TestLabels:
    def test_support_labels_on_simplex(self):
        rng = np.random.default_rng(9)
        atoms = [blob_measure(rng, 10, 2, 3) for _ in range(3)]
        result = free_support_barycenter(atoms, np.full(3, 1 / 3), seed=2)
        labels = result.support.labels
        assert labels.min() >= -1e-9
        assert_allclose(labels.sum(axis=1), 1.0, atol=1e-9)

    def test_label_mass_conservation_under_matched_sizes(self):
        # same-size atoms, well-separated matched clusters: plans are
        # permutation-like, so class mass averages with the weights
        a = LabeledMeasure([[0.0], [100.0]], [[1.0, 0.0], [0.0, 1.0]])
        b = LabeledMeasure([[1.0], [101.0]], [[1.0, 0.0], [0.0, 1.0]])
        weights = [0.3, 0.7]
        result = free_support_barycenter([a, b], weights, beta=5.0, seed=4)
        want = 0.3 * a.labels.mean(axis=0) + 0.7 * b.labels.mean(axis=0)
        assert_allclose(result.support.labels.mean(axis=0), want, atol=1e-6)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(10)
        atoms = [blob_measure(rng, 8, 2, 2) for _ in range(2)]
        result = free_support_barycenter(atoms, [0.5, 0.5], seed=6)
        perm = rng.permutation(8)
        shuffled = [
            LabeledMeasure(atoms[0].features[perm], atoms[0].labels[perm]),
            atoms[1],
        ]
        result_perm = free_support_barycenter(shuffled, [0.5, 0.5], seed=6)
        assert squared_w2(result.support, result_perm.support) < 1e-9


class TestValidation:
    def test_empty_atoms(self):
        with pytest.raises(ValueError, match="at least one"):
            free_support_barycenter([], [1.0])

    def test_weight_length_mismatch(self):
        a = LabeledMeasure([[0.0]], [[1.0]])
        with pytest.raises(ValueError, match="weights for"):
            free_support_barycenter([a], [0.5, 0.5])

    def test_dimension_mismatch(self):
        a = LabeledMeasure([[0.0]], [[1.0]])
        b = LabeledMeasure([[0.0, 1.0]], [[1.0]])
        with pytest.raises(ValueError, match="feature dimension"):
            free_support_barycenter([a, b], [0.5, 0.5])

    def test_off_simplex_weights(self):
        a = LabeledMeasure([[0.0]], [[1.0]])
        with pytest.raises(ValueError, match="simplex"):
            free_support_barycenter([a, a], [0.9, 0.5])

    def test_mixed_labeling_rejected(self):
        a = LabeledMeasure([[0.0]], [[1.0]])
        b = LabeledMeasure([[0.0]])
        with pytest.raises(ValueError, match="all or none"):
            free_support_barycenter([a, b], [0.5, 0.5])


class TestWarmStart:
    def test_warm_start_used_when_shape_matches(self):
        rng = np.random.default_rng(12)
        atoms = [blob_measure(rng, 8, 2, 2) for _ in range(2)]
        first = free_support_barycenter(atoms, [0.5, 0.5], seed=0)
        warm = free_support_barycenter(
            atoms,
            [0.5, 0.5],
            seed=0,
            init_features=first.support.features,
            init_labels=first.support.labels,
        )
        # warm-started from a converged support: immediate convergence
        assert warm.n_iterations <= 2
        assert warm.objective_trace[-1] <= first.objective_trace[-1] + 1e-7
