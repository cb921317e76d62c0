"""Multilinear PCA for second-order (matrix) samples.

Each chip is a 2-mode tensor. Mode 0 indexes rows, mode 1 columns. The
projection for mode ``n`` is a (P_n x I_n) matrix with orthonormal rows, and
a sample ``X`` projects to the core ``U0 (X - mean) U1^T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MpcaParams:
    energy_q: float = 90.0
    max_iterations: int = 10
    tol: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.energy_q <= 100.0:
            raise InvalidArgumentError("energy_q must lie in (0, 100]")
        if self.max_iterations < 0:
            raise InvalidArgumentError("max_iterations must be non-negative")


@dataclass
class MpcaModel:
    mode_projections: list
    mean: np.ndarray
    energy_q: float
    iterations: int = 0
    scatter_history: list = field(default_factory=list)

    @property
    def retained_dims(self) -> tuple:
        return tuple(u.shape[0] for u in self.mode_projections)

    @property
    def input_dims(self) -> tuple:
        return tuple(u.shape[1] for u in self.mode_projections)

    @property
    def feature_dim(self) -> int:
        p0, p1 = self.retained_dims
        return p0 * p1


def _as_stack(samples) -> np.ndarray:
    arrs = [s.gray if hasattr(s, "gray") else np.asarray(s, dtype=np.float64) for s in samples]
    if not arrs:
        raise InvalidArgumentError("sample set is empty")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs) or len(shape) != 2:
        raise InvalidArgumentError("all samples must be 2-D and share dimensions")
    return np.stack(arrs).astype(np.float64)


def mode_unfold(samples, mode: int) -> np.ndarray:
    """Mode-n unfolding of a stack of matrix samples.

    Rows index mode ``mode``; columns run over the remaining chip mode fastest,
    then the sample index.
    """
    X = _as_stack(samples)
    if mode == 0:
        return X.transpose(1, 0, 2).reshape(X.shape[1], -1)
    if mode == 1:
        return X.transpose(2, 0, 1).reshape(X.shape[2], -1)
    raise InvalidArgumentError("mode must be 0 or 1")


def sym_eig(S: np.ndarray):
    """Eigenpairs sorted by descending eigenvalue, signs fixed so the
    largest-magnitude component of each eigenvector is positive."""
    vals, vecs = np.linalg.eigh((S + S.T) / 2.0)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def _mode_scatter(Xc: np.ndarray, mode: int, other: np.ndarray | None) -> np.ndarray:
    if mode == 0:
        Y = Xc if other is None else Xc @ other.T
        return np.einsum("mij,mkj->ik", Y, Y)
    Y = Xc if other is None else np.einsum("pi,mij->mpj", other, Xc)
    return np.einsum("mij,mik->jk", Y, Y)


def _select_dims(eigvals: np.ndarray, energy_q: float) -> int:
    n = eigvals.size
    if energy_q >= 100.0:
        return n
    vals = np.clip(eigvals, 0.0, None)
    total = vals.sum()
    if total <= 0:
        return 1
    frac = np.cumsum(vals) / total
    return int(min(n, np.searchsorted(frac, energy_q / 100.0 - 1e-12) + 1))


def _captured(Xc: np.ndarray, U0: np.ndarray, U1: np.ndarray) -> float:
    core = np.einsum("pi,mij,qj->mpq", U0, Xc, U1)
    return float(np.sum(core * core))


def mpca_fit(samples, params: MpcaParams = MpcaParams()) -> MpcaModel:
    X = _as_stack(samples)
    if X.shape[0] < 2:
        raise InvalidArgumentError("MPCA needs at least two samples")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite values in MPCA input")
    mean = X.mean(axis=0)
    Xc = X - mean

    projections, dims = [], []
    for mode in (0, 1):
        vals, vecs = sym_eig(_mode_scatter(Xc, mode, None))
        p = _select_dims(vals, params.energy_q)
        dims.append(p)
        projections.append(vecs[:, :p].T.copy())

    history = [_captured(Xc, *projections)]
    iterations = 0
    for _ in range(params.max_iterations):
        for mode in (0, 1):
            other = projections[1 - mode]
            _, vecs = sym_eig(_mode_scatter(Xc, mode, other))
            projections[mode] = vecs[:, :dims[mode]].T.copy()
        iterations += 1
        history.append(_captured(Xc, *projections))
        prev, cur = history[-2], history[-1]
        if cur - prev <= params.tol * max(abs(prev), 1e-300):
            break

    return MpcaModel(projections, mean, params.energy_q, iterations, history)


def mpca_project(chip, model: MpcaModel) -> np.ndarray:
    X = chip.gray if hasattr(chip, "gray") else np.asarray(chip, dtype=np.float64)
    if X.shape != model.input_dims:
        raise InvalidArgumentError(f"chip shape {X.shape} does not match model input {model.input_dims}")
    U0, U1 = model.mode_projections
    return (U0 @ (X - model.mean) @ U1.T).ravel()


def mpca_project_many(samples, model: MpcaModel) -> np.ndarray:
    X = _as_stack(samples)
    if X.shape[1:] != model.input_dims:
        raise InvalidArgumentError("sample shape does not match model input")
    U0, U1 = model.mode_projections
    core = np.einsum("pi,mij,qj->mpq", U0, X - model.mean, U1)
    return core.reshape(X.shape[0], -1)


def mpca_reconstruct(feature: np.ndarray, model: MpcaModel) -> np.ndarray:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.size != model.feature_dim:
        raise InvalidArgumentError(f"feature has {feature.size} entries, model expects {model.feature_dim}")
    U0, U1 = model.mode_projections
    return U0.T @ feature.reshape(model.retained_dims) @ U1 + model.mean


def save_model(model: MpcaModel, path) -> None:
    header = {
        "format": "mpca",
        "version": FORMAT_VERSION,
        "input_dims": list(model.input_dims),
        "retained_dims": list(model.retained_dims),
        "energy_q": model.energy_q,
        "iterations": model.iterations,
        "scatter_history": model.scatter_history,
    }
    np.savez(path, header=json.dumps(header), mean=model.mean,
             u0=model.mode_projections[0], u1=model.mode_projections[1])


def load_model(path) -> MpcaModel:
    with np.load(path) as f:
        header = json.loads(str(f["header"]))
        if header.get("format") != "mpca" or header.get("version") != FORMAT_VERSION:
            raise InvalidArgumentError(f"{path}: unsupported model format {header.get('format')} v{header.get('version')}")
        return MpcaModel([f["u0"], f["u1"]], f["mean"], header["energy_q"],
                         header["iterations"], header["scatter_history"])
