import numpy as np
import pytest
from conftest import blobs
from hypothesis import given
from hypothesis import strategies as st

from vessel_bench.classifiers import LinearSvmModel, svm_predict, svm_predict_many, svm_train
from vessel_bench.classifiers.svm import load_model, save_model
from vessel_bench.errors import InvalidArgumentError, NumericError


def test_separable_pair_1d():
    X = np.array([[-1.0], [1.0]])
    model = svm_train(X, [0, 1], c_param=100.0)
    assert list(svm_predict_many(model, X)) == [0, 1]
    # class 1 score grows with x
    assert model.weights[1, 0] > 0 > model.weights[0, 0]


def test_duplicated_samples_same_decisions():
    X, y = blobs(15, sep=3.0, seed=1)
    a = svm_train(X, y, c_param=1.0, tol=1e-8)
    # doubling every sample at half the C leaves the objective unchanged
    b = svm_train(np.vstack([X, X]), np.concatenate([y, y]), c_param=0.5, tol=1e-8)
    probes = np.random.default_rng(2).uniform(-3, 6, (100, 5))
    assert np.array_equal(svm_predict_many(a, probes), svm_predict_many(b, probes))


def test_blobs_held_out_accuracy():
    X, y = blobs(40, seed=3)
    Xt, yt = blobs(50, seed=4)
    model = svm_train(X, y)
    assert np.mean(svm_predict_many(model, Xt) == yt) == 1.0
    assert np.array_equal(svm_predict_many(model, X), y)


def test_zero_model_ties_to_class_zero():
    model = LinearSvmModel(np.zeros((4, 3)), np.zeros(4), 1.0)
    assert svm_predict(model, np.array([1.0, -2.0, 3.0])) == 0


def test_large_margin_class():
    x = np.array([3.0, 4.0, 0.0])
    W = np.zeros((4, 3))
    W[2] = x / np.linalg.norm(x) * 10
    model = LinearSvmModel(W, np.zeros(4), 1.0)
    assert svm_predict(model, x) == 2


@given(st.floats(1e-3, 1e3), st.integers(0, 100))
def test_argmax_invariant_to_positive_scaling(scale, seed):
    rng = np.random.default_rng(seed)
    model = LinearSvmModel(rng.standard_normal((4, 6)), rng.standard_normal(4), 1.0)
    scaled = LinearSvmModel(model.weights * scale, model.biases * scale, 1.0)
    probes = rng.standard_normal((20, 6))
    assert np.array_equal(svm_predict_many(model, probes), svm_predict_many(scaled, probes))


@pytest.mark.parametrize("c", [0.01, 1.0, 100.0])
def test_primal_objective_monotone(c):
    X, y = blobs(30, sep=2.0, seed=5)
    model = svm_train(X, y, c_param=c, tol=1e-9, max_epochs=200)
    for hist in model.objective_history:
        assert len(hist) >= 2
        assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_deterministic_given_seed():
    X, y = blobs(20, sep=2.0, seed=6)
    a = svm_train(X, y, seed=3)
    b = svm_train(X, y, seed=3)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)


def test_warm_start_pulls_towards_prior():
    X, y = blobs(20, sep=2.0, seed=7)
    prior = svm_train(X, y, c_param=1.0)
    # with a tiny C the regularizer dominates and the prior survives
    warm = svm_train(X[::5], y[::5], c_param=1e-6, warm_start=prior)
    assert np.allclose(warm.weights, prior.weights, atol=1e-4)
    cold = svm_train(X[::5], y[::5], c_param=1e-6)
    assert np.abs(cold.weights).max() < 1e-4
    with pytest.raises(InvalidArgumentError):
        svm_train(X, y, warm_start=LinearSvmModel(np.zeros((4, 2)), np.zeros(4), 1.0))


def test_errors():
    X, y = blobs(5, seed=8)
    with pytest.raises(InvalidArgumentError):
        svm_train(X, np.where(y == 3, 0, y), class_count=4)
    bad = X.copy()
    bad[0, 0] = np.inf
    with pytest.raises(NumericError):
        svm_train(bad, y)
    with pytest.raises(InvalidArgumentError):
        svm_train(X, y, c_param=0.0)
    model = svm_train(X, y)
    with pytest.raises(InvalidArgumentError):
        svm_predict(model, np.zeros(3))


def test_save_load_round_trip(tmp_path):
    X, y = blobs(10, seed=9)
    model = svm_train(X, y)
    save_model(model, tmp_path / "svm.npz")
    back = load_model(tmp_path / "svm.npz")
    assert np.array_equal(back.weights, model.weights) and np.array_equal(back.biases, model.biases)
    assert back.c_param == model.c_param
