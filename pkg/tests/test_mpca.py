import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import kron_projection_oracle, unfold_oracle

from vessel_bench.errors import InvalidArgumentError, NumericError
from vessel_bench.mpca import (
    MpcaParams,
    load_model,
    mode_unfold,
    mpca_fit,
    mpca_project,
    mpca_project_many,
    mpca_reconstruct,
    save_model,
    sym_eig,
)


def chips(n=12, shape=(8, 10), seed=0):
    return list(np.random.default_rng(seed).random((n, *shape)))


def low_rank_chips(n=20, shape=(9, 7), seed=0):
    rng = np.random.default_rng(seed)
    A = np.linalg.qr(rng.standard_normal((shape[0], 2)))[0]
    B = np.linalg.qr(rng.standard_normal((shape[1], 2)))[0]
    return [np.outer(A @ rng.standard_normal(2), B @ rng.standard_normal(2)) for _ in range(n)]


def recon_error(samples, model):
    feats = mpca_project_many(samples, model)
    return sum(float(np.sum((mpca_reconstruct(f, model) - s) ** 2)) for f, s in zip(feats, samples))


def test_unfold_single_matrix():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(mode_unfold([m], 0), m)
    assert np.array_equal(mode_unfold([m], 1), m.T)


@pytest.mark.parametrize("mode", [0, 1])
def test_unfold_matches_index_oracle(mode):
    pair = np.random.default_rng(mode).random((2, 3, 4))
    assert np.array_equal(mode_unfold(list(pair), mode), unfold_oracle(pair, mode))


def test_unfold_errors():
    with pytest.raises(InvalidArgumentError):
        mode_unfold([], 0)
    with pytest.raises(InvalidArgumentError):
        mode_unfold([np.zeros((2, 2))], 2)
    with pytest.raises(InvalidArgumentError):
        mode_unfold([np.zeros((2, 2)), np.zeros((2, 3))], 0)


def test_full_energy_is_lossless():
    samples = chips()
    model = mpca_fit(samples, MpcaParams(energy_q=100))
    assert model.retained_dims == model.input_dims == (8, 10)
    for s in samples:
        assert np.max(np.abs(mpca_reconstruct(mpca_project(s, model), model) - s)) < 1e-8


def test_known_multilinear_rank():
    samples = low_rank_chips()
    model = mpca_fit(samples, MpcaParams(energy_q=99))
    # centering adds the mean, which lies in the same row/column subspaces
    assert model.retained_dims == (2, 2)
    assert recon_error(samples, model) < 1e-8


def test_identical_samples_degenerate():
    s = np.random.default_rng(3).random((5, 6))
    model = mpca_fit([s, s.copy()], MpcaParams(energy_q=90))
    assert model.retained_dims == (1, 1)
    assert np.allclose(model.mean, s)
    assert recon_error([s, s], model) == 0.0


def test_fit_errors():
    with pytest.raises(InvalidArgumentError):
        mpca_fit([np.zeros((4, 4))])
    with pytest.raises(NumericError):
        mpca_fit([np.zeros((4, 4)), np.full((4, 4), np.nan)])
    with pytest.raises(InvalidArgumentError):
        MpcaParams(energy_q=0)
    with pytest.raises(InvalidArgumentError):
        MpcaParams(energy_q=100.5)


def test_project_mean_and_zero_feature():
    model = mpca_fit(chips(), MpcaParams(energy_q=80))
    assert np.allclose(mpca_project(model.mean, model), 0.0, atol=1e-14)
    assert np.array_equal(mpca_reconstruct(np.zeros(model.feature_dim), model), model.mean)
    with pytest.raises(InvalidArgumentError):
        mpca_project(np.zeros((3, 3)), model)
    with pytest.raises(InvalidArgumentError):
        mpca_reconstruct(np.zeros(model.feature_dim + 1), model)


@pytest.mark.parametrize("seed", range(10))
def test_projection_matches_kronecker_oracle(seed):
    model = mpca_fit(chips(seed=100), MpcaParams(energy_q=85))
    chip = np.random.default_rng(seed).random((8, 10))
    u0, u1 = model.mode_projections
    expected = kron_projection_oracle(chip, model.mean, u0, u1)
    assert np.max(np.abs(mpca_project(chip, model) - expected)) < 1e-8


def test_project_many_matches_single():
    samples = chips(seed=4)
    model = mpca_fit(samples, MpcaParams(energy_q=90))
    many = mpca_project_many(samples, model)
    for row, s in zip(many, samples):
        assert np.allclose(row, mpca_project(s, model), atol=1e-12)


@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_projection_is_affine(alpha, seed):
    model = mpca_fit(chips(seed=5), MpcaParams(energy_q=90))
    X = np.random.default_rng(seed).random((8, 10))
    mixed = alpha * X + (1 - alpha) * model.mean
    assert np.allclose(mpca_project(mixed, model), alpha * mpca_project(X, model), atol=1e-10)


@pytest.mark.parametrize("q", [50, 80, 95, 100])
def test_rows_orthonormal_and_scatter_monotone(q):
    model = mpca_fit(chips(n=15, seed=q), MpcaParams(energy_q=q, tol=0.0))
    for u in model.mode_projections:
        assert u.shape[0] <= u.shape[1]
        assert np.max(np.abs(u @ u.T - np.eye(u.shape[0]))) < 1e-8
    hist = model.scatter_history
    assert len(hist) == model.iterations + 1
    assert all(b >= a * (1 - 1e-12) for a, b in zip(hist, hist[1:]))


def test_error_non_increasing_in_energy():
    samples = chips(n=20, shape=(12, 12), seed=9)
    errs = [recon_error(samples, mpca_fit(samples, MpcaParams(energy_q=q))) for q in (80, 90, 95, 99, 100)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-8


def test_error_tracks_discarded_eigenvalues():
    # near-separable data: row and column spectra decay independently, so the
    # per-mode discarded eigenvalue mass predicts the reconstruction error
    rng = np.random.default_rng(2)
    r, c = 0.7 ** np.arange(10), 0.6 ** np.arange(10)
    samples = [np.outer(r, c) * rng.standard_normal((10, 10)) for _ in range(200)]
    model = mpca_fit(samples, MpcaParams(energy_q=95))
    unfolded = [mode_unfold(np.stack(samples) - model.mean, m) for m in (0, 1)]
    discarded = sum(float(np.linalg.eigvalsh(u @ u.T)[::-1][p:].sum())
                    for u, p in zip(unfolded, model.retained_dims))
    assert recon_error(samples, model) == pytest.approx(discarded, rel=0.05)


def test_sym_eig_contract():
    S = np.random.default_rng(0).random((6, 6))
    S = S @ S.T
    vals, vecs = sym_eig(S)
    assert np.all(np.diff(vals) <= 0)
    idx = np.argmax(np.abs(vecs), axis=0)
    assert np.all(vecs[idx, np.arange(6)] > 0)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.T, S, atol=1e-10)


def test_save_load_round_trip(tmp_path):
    model = mpca_fit(chips(), MpcaParams(energy_q=90))
    save_model(model, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.retained_dims == model.retained_dims
    assert back.iterations == model.iterations and back.scatter_history == model.scatter_history
    chip = chips(n=1, seed=7)[0]
    assert np.array_equal(mpca_project(chip, back), mpca_project(chip, model))
