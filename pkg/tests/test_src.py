import numpy as np
import pytest
from conftest import blobs
from hypothesis import given
from hypothesis import strategies as st
from oracles import l1_ball_oracle, sparse_instance

from vessel_bench.classifiers import (
    class_residuals,
    homotopy_l1,
    sparse_solve,
    src_classify,
    src_fit,
    src_merge,
    src_predict_many,
)
from vessel_bench.classifiers.src import load_model, save_model
from vessel_bench.errors import InvalidArgumentError, NotConvergedError


def unit_rows(n, dim, seed):
    X = np.random.default_rng(seed).standard_normal((n, dim))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def test_fit_one_atom_per_class():
    X = np.random.default_rng(0).standard_normal((4, 6)) * 3
    model = src_fit(X, [0, 1, 2, 3])
    assert model.dictionary.shape == (6, 4)
    assert np.allclose(np.linalg.norm(model.dictionary, axis=0), 1.0, atol=1e-9)
    assert list(model.atom_labels) == [0, 1, 2, 3]


@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_fit_scale_invariance(alpha, seed):
    X = np.random.default_rng(seed).standard_normal((8, 5))
    labels = np.arange(8) % 4
    a, b = src_fit(X, labels), src_fit(alpha * X, labels)
    assert np.allclose(a.dictionary, b.dictionary, atol=1e-12)
    assert np.allclose(np.linalg.norm(b.dictionary, axis=0), 1.0, atol=1e-9)


def test_fit_errors():
    X = np.ones((4, 3))
    X[2] = 0
    with pytest.raises(InvalidArgumentError):
        src_fit(X, [0, 1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        src_fit(np.ones((3, 3)), [0, 1, 3])


def test_atom_target_gives_indicator():
    X = unit_rows(10, 8, 1)
    model = src_fit(X, np.arange(10) % 4, epsilon=1e-6)
    for j in range(10):
        coef = sparse_solve(model, X[j])
        assert np.flatnonzero(np.abs(coef) > 1e-9).tolist() == [j]
        assert coef[j] == pytest.approx(1.0, abs=1e-5)


def test_zero_sample_gives_zero_code():
    model = src_fit(unit_rows(6, 4, 2), np.arange(6) % 2)
    assert np.array_equal(sparse_solve(model, np.zeros(4)), np.zeros(6))


@pytest.mark.parametrize("seed", range(20))
def test_sparse_solve_matches_enumeration(seed):
    X, y = sparse_instance(seed)
    model = src_fit(X, np.arange(6) % 2, epsilon=1e-6)
    coef = sparse_solve(model, y)
    expected = l1_ball_oracle(model.dictionary, y, 1e-6)
    assert np.array_equal(np.abs(coef) > 1e-9, np.abs(expected) > 1e-9)
    assert np.max(np.abs(coef - expected)) < 1e-6
    assert np.linalg.norm(model.dictionary @ coef - y) <= 1e-6 + 1e-12


@pytest.mark.parametrize("eps", [0.05, 0.2, 0.5])
def test_l1_norm_matches_enumeration_at_larger_eps(eps):
    for seed in range(5):
        X, y = sparse_instance(seed + 50)
        model = src_fit(X, np.arange(6) % 2, epsilon=eps)
        coef = sparse_solve(model, y)
        best = np.abs(l1_ball_oracle(model.dictionary, y, eps)).sum()
        assert np.abs(coef).sum() <= best * 1.01 + 1e-12
        assert np.linalg.norm(model.dictionary @ coef - y) <= eps + 1e-12


def test_one_sparse_recovery_low_coherence():
    for trial in range(100):
        n = 4 + trial % 7
        X = unit_rows(n, 2 * n + trial % 3, 1000 + trial)
        model = src_fit(X, np.arange(n) % 2, epsilon=1e-6)
        j = trial % n
        coef = sparse_solve(model, X[j])
        assert np.flatnonzero(np.abs(coef) > 1e-9).tolist() == [j]


def test_classify_atom_of_class_two():
    X = unit_rows(8, 10, 3)
    model = src_fit(X, [0, 1, 2, 3, 0, 1, 2, 3], epsilon=1e-6)
    cls, res = src_classify(model, X[6])
    assert cls == 2 and res[2] < 1e-5


def test_orthogonal_sample_ties_to_class_zero():
    X = np.zeros((4, 6))
    X[np.arange(4), np.arange(4)] = 1.0
    model = src_fit(X, [3, 2, 1, 0])
    y = np.zeros(6)
    y[5] = 2.0
    cls, res = src_classify(model, y)
    assert cls == 0 and np.allclose(res, 1.0)


@given(st.integers(0, 10_000))
def test_residual_partition_and_bound(seed):
    rng = np.random.default_rng(seed)
    X = unit_rows(12, 8, seed)
    model = src_fit(X, np.arange(12) % 4, epsilon=0.1)
    y = rng.standard_normal(8)
    yn = y / np.linalg.norm(y)
    coef = sparse_solve(model, y)
    parts = [np.where(model.atom_labels == c, coef, 0.0) for c in range(4)]
    assert np.array_equal(np.sum(parts, axis=0), coef)
    cls, res = src_classify(model, y)
    assert np.allclose(res, class_residuals(model, yn, coef))
    assert res[cls] <= 1.0 + 1e-12


def test_blobs_accuracy():
    X, y = blobs(30, seed=11)
    Xt, yt = blobs(40, seed=12)
    model = src_fit(X, y)
    assert np.mean(src_predict_many(model, Xt) == yt) >= 0.95


def test_infeasible_zero_epsilon_reports_best():
    X = np.zeros((3, 5))
    X[np.arange(3), np.arange(3)] = 1.0
    model = src_fit(X, [0, 1, 2], epsilon=0.0)
    y = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
    with pytest.raises(NotConvergedError) as info:
        sparse_solve(model, y)
    best = info.value.best
    assert best is not None and best.shape == (3,)
    # the best iterate is the projection onto the span
    assert np.allclose(best, [1 / np.sqrt(3), 1 / np.sqrt(3), 0.0], atol=1e-9)
    with pytest.raises(NotConvergedError):
        homotopy_l1(model.dictionary, y / np.linalg.norm(y), 0.0)


def test_max_sparsity_caps_support():
    X = unit_rows(20, 10, 4)
    model = src_fit(X, np.arange(20) % 4, epsilon=1e-6, max_sparsity=3)
    coef = sparse_solve(model, np.random.default_rng(5).standard_normal(10))
    assert np.count_nonzero(coef) <= 4


def test_merge_weights_and_labels():
    a = src_fit(unit_rows(4, 6, 6), [0, 1, 2, 3])
    b = src_fit(unit_rows(4, 6, 7), [0, 1, 2, 3])
    m = src_merge(a, b, first_weight=0.5)
    assert m.atom_count == 8 and list(m.atom_labels) == [0, 1, 2, 3] * 2
    assert np.array_equal(m.atom_costs, [2.0] * 4 + [1.0] * 4)
    # an expensive atom loses to an equally good cheap copy
    dup = src_merge(a, a, first_weight=0.5)
    coef = sparse_solve(dup, a.dictionary[:, 1], epsilon=1e-6)
    assert np.allclose(coef[:4], 0.0, atol=1e-9) and coef[5] == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(InvalidArgumentError):
        src_merge(a, src_fit(unit_rows(4, 5, 8), [0, 1, 2, 3]))


def test_dimension_mismatch():
    model = src_fit(unit_rows(4, 6, 9), [0, 1, 2, 3])
    with pytest.raises(InvalidArgumentError):
        sparse_solve(model, np.ones(5))


def test_save_load_round_trip(tmp_path):
    model = src_merge(src_fit(unit_rows(4, 6, 10), [0, 1, 2, 3]),
                      src_fit(unit_rows(4, 6, 11), [0, 1, 2, 3]), 0.7)
    save_model(model, tmp_path / "src.npz")
    back = load_model(tmp_path / "src.npz")
    assert np.array_equal(back.dictionary, model.dictionary)
    assert np.array_equal(back.atom_costs, model.atom_costs)
    y = np.random.default_rng(12).standard_normal(6)
    assert np.array_equal(sparse_solve(back, y), sparse_solve(model, y))
