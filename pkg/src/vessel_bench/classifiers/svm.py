"""One-vs-rest linear SVM trained by dual coordinate descent.

Each binary problem minimizes ``0.5 * ||w - w0||^2 + C * sum(hinge)`` over the
bias-augmented features, where ``w0`` is zero for a cold start or the weights
of a previously trained model when warm-starting. After every epoch of dual
updates the primal iterate moves by exact line search towards the weights
implied by the dual variables, so the primal objective never increases.
Training stops once the relative duality gap falls below ``tol``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import InvalidArgumentError, NumericError

FORMAT_VERSION = 1
BIAS_SCALE = 1.0


@dataclass
class LinearSvmModel:
    weights: np.ndarray  # (K, d)
    biases: np.ndarray  # (K,)
    c_param: float
    objective_history: list = field(default_factory=list)
    epochs: list = field(default_factory=list)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise InvalidArgumentError(f"feature dimension {X.shape[1]} != model dimension {self.dim}")
        return X @ self.weights.T + self.biases


@numba.njit(cache=True)
def _objectives(X, y, alpha, w, wp, w0, C):
    """Primal at ``wp`` and dual at ``alpha`` (whose implied weights are ``w``)."""
    n = X.shape[0]
    hinge = 0.0
    dual_lin = 0.0
    for i in range(n):
        hinge += max(0.0, 1.0 - y[i] * np.dot(wp, X[i]))
        dual_lin += alpha[i] * (1.0 - y[i] * np.dot(w0, X[i]))
    dp = wp - w0
    dv = w - w0
    return 0.5 * np.dot(dp, dp) + C * hinge, dual_lin - 0.5 * np.dot(dv, dv)


@numba.njit(cache=True)
def _segment_value(s, aa, ad, dd, m0, m1, C):
    total = 0.0
    for i in range(m0.shape[0]):
        total += max(0.0, 1.0 - m0[i] - s * m1[i])
    return 0.5 * (aa + 2.0 * s * ad + s * s * dd) + C * total


@numba.njit(cache=True)
def _segment_slope(s, ad, dd, m0, m1, C):
    g = ad + s * dd
    for i in range(m0.shape[0]):
        if 1.0 - m0[i] - s * m1[i] > 0.0:
            g -= C * m1[i]
    return g


@numba.njit(cache=True)
def _line_search(X, y, wp, wd, w0, C):
    """Exact minimizer of the primal on the segment [wp, wd] by bisection on its slope."""
    d = wd - wp
    a = wp - w0
    n = X.shape[0]
    m0 = np.empty(n)
    m1 = np.empty(n)
    for i in range(n):
        m0[i] = y[i] * np.dot(X[i], wp)
        m1[i] = y[i] * np.dot(X[i], d)
    aa, ad, dd = np.dot(a, a), np.dot(a, d), np.dot(d, d)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _segment_slope(mid, ad, dd, m0, m1, C) < 0.0:
            lo = mid
        else:
            hi = mid
    best_s = 0.0
    best = _segment_value(0.0, aa, ad, dd, m0, m1, C)
    for s in (hi, 1.0):
        v = _segment_value(s, aa, ad, dd, m0, m1, C)
        if v < best:
            best, best_s = v, s
    return wp + best_s * d, best


@numba.njit(cache=True)
def _run_epochs(X, y, alpha, w, wp, w0, qdiag, C, orders, tol, history):
    """Run one dual sweep per row of ``orders``; returns (epochs run, converged, primal iterate)."""
    prev, _ = _objectives(X, y, alpha, w, wp, w0, C)
    for e in range(orders.shape[0]):
        for i in orders[e]:
            if qdiag[i] <= 0.0:
                continue
            g = y[i] * np.dot(w, X[i]) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / qdiag[i], 0.0), C)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * X[i]
                alpha[i] = a_new
        cand, _ = _line_search(X, y, wp, w, w0, C)
        primal, dual = _objectives(X, y, alpha, w, cand, w0, C)
        # rounding in the segment formula can hide a sub-ulp increase
        if primal <= prev:
            wp = cand
        else:
            primal = prev
        prev = primal
        history[e] = primal
        if primal - dual <= tol * max(abs(primal), 1e-12):
            return e + 1, True, wp
    return orders.shape[0], False, wp


def _train_binary(X, y, C, w0, tol, max_epochs, rng, chunk=25):
    n = X.shape[0]
    alpha = np.zeros(n)
    w = w0.copy()
    wp = w0.copy()
    qdiag = np.einsum("ij,ij->i", X, X)
    history = [_objectives(X, y, alpha, w, wp, w0, C)[0]]
    epochs = 0
    while epochs < max_epochs:
        k = min(chunk, max_epochs - epochs)
        orders = np.stack([rng.permutation(n) for _ in range(k)])
        buf = np.empty(k)
        ran, done, wp = _run_epochs(X, y, alpha, w, wp, w0, qdiag, C, orders, tol, buf)
        history.extend(buf[:ran].tolist())
        epochs += ran
        if done:
            break
    return wp, history, epochs


def _check_inputs(features, labels, class_count):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError("features must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite feature values")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (X.shape[0],):
        raise InvalidArgumentError("one label per sample is required")
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size else 0
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise InvalidArgumentError("labels out of range")
    present = np.bincount(labels, minlength=class_count)
    if class_count < 2 or np.any(present == 0):
        missing = [k for k in range(class_count) if present[k] == 0]
        raise InvalidArgumentError(f"every class needs at least one sample; missing {missing}")
    return X, labels, class_count


def svm_train(features, labels, c_param: float = 1.0, tol: float = 1e-4, max_epochs: int = 1000,
              seed: int = 0, class_count: int | None = None,
              warm_start: LinearSvmModel | None = None) -> LinearSvmModel:
    """Train K one-vs-rest hinge-loss problems.

    With ``warm_start`` the regularizer pulls each class's weights towards the
    given model rather than towards zero.
    """
    X, labels, K = _check_inputs(features, labels, class_count)
    if c_param <= 0:
        raise InvalidArgumentError("C must be positive")
    Xa = np.hstack([X, np.full((X.shape[0], 1), BIAS_SCALE)])
    if warm_start is not None:
        if warm_start.dim != X.shape[1] or warm_start.class_count != K:
            raise InvalidArgumentError("warm-start model does not match feature dimension or class count")
        priors = np.hstack([warm_start.weights, warm_start.biases[:, None] / BIAS_SCALE])
    else:
        priors = np.zeros((K, Xa.shape[1]))

    weights, biases, histories, epochs = [], [], [], []
    for k in range(K):
        y = np.where(labels == k, 1.0, -1.0)
        rng = np.random.default_rng([seed, k])
        w, hist, ep = _train_binary(Xa, y, float(c_param), priors[k], tol, max_epochs, rng)
        weights.append(w[:-1])
        biases.append(w[-1] * BIAS_SCALE)
        histories.append(hist)
        epochs.append(ep)
    return LinearSvmModel(np.array(weights), np.array(biases), float(c_param), histories, epochs)


def svm_predict(model: LinearSvmModel, feature) -> int:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 1:
        raise InvalidArgumentError("svm_predict takes a single feature vector")
    return int(np.argmax(model.decision_function(feature)[0]))


def svm_predict_many(model: LinearSvmModel, features) -> np.ndarray:
    return np.argmax(model.decision_function(features), axis=1)


def save_model(model: LinearSvmModel, path) -> None:
    header = {"format": "linear_svm", "version": FORMAT_VERSION, "c_param": model.c_param,
              "class_count": model.class_count, "dim": model.dim, "epochs": model.epochs}
    np.savez(path, header=json.dumps(header), weights=model.weights, biases=model.biases)


def load_model(path) -> LinearSvmModel:
    with np.load(path) as f:
        header = json.loads(str(f["header"]))
        if header.get("format") != "linear_svm" or header.get("version") != FORMAT_VERSION:
            raise InvalidArgumentError(f"{path}: unsupported model format")
        return LinearSvmModel(f["weights"], f["biases"], header["c_param"], [], header["epochs"])
