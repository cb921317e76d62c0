"""Sparse representation classification.

A test sample is coded over a dictionary of unit-norm training features by
solving ``min sum(cost_i * |x_i|)`` subject to ``||D x - y||_2 <= eps`` and is
assigned to the class whose atoms alone reconstruct it best.

The constrained problem is solved exactly by following the lasso homotopy
path from ``lambda = max|D^T y|`` downwards and stopping at the point where
the residual norm first reaches ``eps``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import InvalidArgumentError, NotConvergedError

FORMAT_VERSION = 1
DEFAULT_EPSILON = 0.05
_TINY = 1e-12


@dataclass
class SrcModel:
    dictionary: np.ndarray  # (dim, N), unit-norm columns
    atom_labels: np.ndarray  # (N,)
    epsilon: float = DEFAULT_EPSILON
    max_sparsity: int | None = None
    atom_costs: np.ndarray | None = None
    class_count: int | None = None
    _gram: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.atom_labels = np.asarray(self.atom_labels, dtype=np.int64)
        if self.class_count is None:
            self.class_count = int(self.atom_labels.max()) + 1
        if self.atom_costs is None:
            self.atom_costs = np.ones(self.atom_count)

    @property
    def atom_count(self) -> int:
        return self.dictionary.shape[1]

    @property
    def dim(self) -> int:
        return self.dictionary.shape[0]

    def scaled_gram(self) -> np.ndarray:
        """Gram matrix of the cost-scaled dictionary, computed once per model."""
        if self._gram is None:
            Ds = self.dictionary / self.atom_costs
            self._gram = Ds.T @ Ds
        return self._gram


def src_fit(features, labels, epsilon: float = DEFAULT_EPSILON, max_sparsity: int | None = None,
            class_count: int | None = None, atom_costs=None) -> SrcModel:
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or labels.shape != (X.shape[0],):
        raise InvalidArgumentError("features must be (n, d) with one label per row")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise InvalidArgumentError(f"zero-norm training sample at rows {np.flatnonzero(norms == 0).tolist()}")
    if class_count is None:
        class_count = int(labels.max()) + 1
    present = np.bincount(labels, minlength=class_count)
    if np.any(present == 0):
        raise InvalidArgumentError("every class needs at least one atom")
    if atom_costs is not None:
        atom_costs = np.asarray(atom_costs, dtype=np.float64)
        if atom_costs.shape != labels.shape or np.any(atom_costs <= 0):
            raise InvalidArgumentError("atom_costs must be positive, one per sample")
    D = (X / norms[:, None]).T.copy()
    return SrcModel(D, labels, float(epsilon), max_sparsity, atom_costs, class_count)


def src_merge(first: SrcModel, second: SrcModel, first_weight: float = 1.0) -> SrcModel:
    """Union of two dictionaries; atoms of ``first`` are down-weighted by ``first_weight``.

    A weight below 1 makes those atoms proportionally more expensive to use.
    """
    if first.dim != second.dim:
        raise InvalidArgumentError("dictionaries have different feature dimensions")
    if first_weight <= 0:
        raise InvalidArgumentError("atom weight must be positive")
    return SrcModel(
        np.hstack([first.dictionary, second.dictionary]),
        np.concatenate([first.atom_labels, second.atom_labels]),
        second.epsilon,
        second.max_sparsity,
        np.concatenate([first.atom_costs / first_weight, second.atom_costs]),
        max(first.class_count, second.class_count),
    )


# _path status codes
_REACHED, _PATH_END, _CAPPED = 0, 1, 2


@numba.njit(cache=True)
def _chol_solve(L, k, rhs, out):
    for i in range(k):
        acc = rhs[i]
        for j in range(i):
            acc -= L[i, j] * out[j]
        out[i] = acc / L[i, i]
    for i in range(k - 1, -1, -1):
        acc = out[i]
        for j in range(i + 1, k):
            acc -= L[j, i] * out[j]
        out[i] = acc / L[i, i]


@numba.njit(cache=True)
def _chol_delete(L, k, pos):
    """Remove row/column ``pos`` from the k x k factor in place (Givens downdate)."""
    for i in range(pos, k - 1):
        for j in range(k):
            L[i, j] = L[i + 1, j]
    for j in range(pos, k - 1):
        a, b = L[j, j], L[j, j + 1]
        r = np.hypot(a, b)
        c, s = a / r, b / r
        for i in range(j, k - 1):
            u, w = L[i, j], L[i, j + 1]
            L[i, j] = c * u + s * w
            L[i, j + 1] = -s * u + c * w
    for i in range(k):
        L[i, k - 1] = 0.0
        L[k - 1, i] = 0.0


@numba.njit(cache=True)
def _path(G, c0, rr0, rank, epsilon, max_iter, max_sparsity, tiny):
    """Homotopy in Gram form: G = D^T D, c0 = D^T y, rr0 = y^T y.

    The residual r never needs to be formed: c = D^T r, r.v = c_A.d and
    |r|^2 all move linearly or quadratically along each segment.
    """
    n = G.shape[0]
    cap = min(rank, n) + 1
    x = np.zeros(n)
    rr = rr0
    slack = 1e-10 * max(1.0, np.sqrt(rr0))
    if np.sqrt(rr) <= epsilon + slack:
        return x, _REACHED
    c = c0.copy()
    is_active = np.zeros(n, dtype=np.bool_)
    banned = np.zeros(n, dtype=np.bool_)
    active = np.zeros(cap, dtype=np.int64)
    L = np.zeros((cap, cap))
    signs = np.zeros(cap)
    d = np.zeros(cap)
    a = np.zeros(n)
    j = int(np.argmax(np.abs(c)))
    lam = abs(c[j])
    active[0] = j
    is_active[j] = True
    L[0, 0] = np.sqrt(G[j, j])
    k = 1
    last_dropped, dropped_sign = -1, 0.0

    for _ in range(max_iter):
        for i in range(k):
            signs[i] = 1.0 if c[active[i]] >= 0 else -1.0
        _chol_solve(L, k, signs, d)
        # a = D^T v with v = D_A d
        a[:] = 0.0
        for i in range(k):
            a += d[i] * G[active[i]]
        vv, rv = 0.0, 0.0
        for i in range(k):
            vv += d[i] * a[active[i]]
            rv += d[i] * c[active[i]]

        # residual reaches epsilon along r - step * v
        g_eps = np.inf
        disc = rv * rv - vv * (rr - epsilon * epsilon)
        if vv > 0 and disc >= 0:
            root = (rv - np.sqrt(disc)) / vv
            if root > 0:
                g_eps = root

        g_join, j_join = np.inf, -1
        for i in range(n):
            if is_active[i] or banned[i]:
                continue
            for sgn in (1.0, -1.0):
                if i == last_dropped and sgn == dropped_sign:
                    # a just-dropped atom sits at |c| = lam; it may not re-enter with its old sign
                    continue
                den = 1.0 - sgn * a[i]
                if den == 0.0:
                    continue
                t = (lam - sgn * c[i]) / den
                if t <= tiny:
                    # tied with the active set and about to overtake it: join now
                    if den > 0.0 and t >= -tiny:
                        t = 0.0
                    else:
                        continue
                if t < g_join:
                    g_join, j_join = t, i

        g_drop, k_drop = np.inf, -1
        for i in range(k):
            if d[i] != 0.0:
                t = -x[active[i]] / d[i]
                if t > tiny and t < g_drop:
                    g_drop, k_drop = t, i

        step = min(g_eps, g_join, g_drop, lam)
        for i in range(k):
            x[active[i]] += step * d[i]
        c -= step * a
        rr = max(rr - 2.0 * step * rv + step * step * vv, 0.0)
        lam -= step
        last_dropped = -1

        if step == g_eps:
            return x, _REACHED
        if lam <= tiny:
            if np.sqrt(rr) <= epsilon + slack:
                return x, _REACHED
            return x, _PATH_END
        if step == g_drop:
            gone = active[k_drop]
            dropped_sign = signs[k_drop]
            x[gone] = 0.0
            is_active[gone] = False
            _chol_delete(L, k, k_drop)
            for i in range(k_drop, k - 1):
                active[i] = active[i + 1]
            k -= 1
            last_dropped = gone
        else:
            # forward substitution for the new factor row
            for i in range(k):
                acc = G[active[i], j_join]
                for q in range(i):
                    acc -= L[i, q] * L[k, q]
                L[k, i] = acc / L[i, i]
            d2 = G[j_join, j_join]
            for i in range(k):
                d2 -= L[k, i] * L[k, i]
            if d2 <= 1e-12 * G[j_join, j_join] or k + 1 >= cap:
                # linearly dependent on the active set
                for i in range(k):
                    L[k, i] = 0.0
                banned[j_join] = True
                continue
            L[k, k] = np.sqrt(d2)
            active[k] = j_join
            is_active[j_join] = True
            k += 1
        if max_sparsity >= 0 and k > max_sparsity:
            return x, _CAPPED
    return x, _CAPPED


def _polish(D: np.ndarray, y: np.ndarray, x: np.ndarray, epsilon: float) -> np.ndarray:
    """Re-solve the final segment directly when the tracked residual drifted past ``epsilon``.

    On a fixed support and sign pattern the path is ``x = G^-1 (D^T y - lam s)``;
    ``lam`` is set so that the residual norm is exactly ``epsilon``. The
    result is kept only if it preserves the signs.
    """
    res = float(np.linalg.norm(D @ x - y))
    if res <= epsilon:
        return x
    S = np.flatnonzero(x)
    A = D[:, S]
    s = np.sign(x[S])
    try:
        x_ls = np.linalg.solve(A.T @ A, A.T @ y)
        g_s = np.linalg.solve(A.T @ A, s)
    except np.linalg.LinAlgError:
        return x
    r0 = y - A @ x_ls
    v = A @ g_s
    slack = epsilon * epsilon - float(r0 @ r0)
    vv = float(v @ v)
    if slack < 0 or vv <= 0:
        return x
    xs = x_ls - np.sqrt(slack / vv) * g_s
    if np.any(np.sign(xs) != s):
        return x
    out = np.zeros_like(x)
    out[S] = xs
    return out if np.linalg.norm(D @ out - y) < res else x


def homotopy_l1(D: np.ndarray, y: np.ndarray, epsilon: float, max_iter: int | None = None,
                max_sparsity: int | None = None, gram: np.ndarray | None = None) -> np.ndarray:
    """Solve ``min ||x||_1 s.t. ||D x - y||_2 <= epsilon`` by lasso homotopy.

    Raises NotConvergedError (with the end-of-path iterate as ``best``) when
    the constraint cannot be met. The loop stops after ``max_iter`` breakpoints
    (default 10 * atom count) or when more than ``max_sparsity`` atoms are
    active and returns the current iterate in both cases.
    """
    D = np.asarray(D, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if max_iter is None:
        max_iter = 10 * D.shape[1]
    if gram is None:
        gram = D.T @ D
    x, status = _path(gram, D.T @ y, float(y @ y), min(D.shape), float(epsilon), int(max_iter),
                      -1 if max_sparsity is None else int(max_sparsity), _TINY)
    if status == _REACHED and x.any():
        x = _polish(D, y, x, float(epsilon))
    if status == _PATH_END:
        # the in-loop residual is tracked incrementally; decide on the exact one
        res = float(np.linalg.norm(D @ x - y))
        if res <= epsilon + 1e-10 * max(1.0, float(np.linalg.norm(y))):
            return x
        raise NotConvergedError(f"residual {res:.3g} exceeds epsilon {epsilon:.3g} at the end of the path",
                                best=x)
    return x


def sparse_solve(model: SrcModel, sample, epsilon: float | None = None) -> np.ndarray:
    """Sparse code of the L2-normalized ``sample`` over the model's dictionary."""
    y = np.asarray(sample, dtype=np.float64)
    if y.shape != (model.dim,):
        raise InvalidArgumentError(f"sample dimension {y.shape} != dictionary dimension {model.dim}")
    norm = np.linalg.norm(y)
    if norm == 0:
        return np.zeros(model.atom_count)
    y = y / norm
    eps = model.epsilon if epsilon is None else epsilon
    costs = model.atom_costs
    try:
        z = homotopy_l1(model.dictionary / costs, y, eps, max_sparsity=model.max_sparsity,
                        gram=model.scaled_gram())
    except NotConvergedError as err:
        raise NotConvergedError(str(err), best=err.best / costs) from None
    return z / costs


def class_residuals(model: SrcModel, y: np.ndarray, coef: np.ndarray) -> np.ndarray:
    res = np.empty(model.class_count)
    for cls in range(model.class_count):
        part = np.where(model.atom_labels == cls, coef, 0.0)
        res[cls] = np.linalg.norm(y - model.dictionary @ part)
    return res


def src_classify(model: SrcModel, sample, epsilon: float | None = None):
    """Return (class index, per-class residuals).

    If the residual constraint is infeasible the end-of-path iterate, which is
    the closest the dictionary gets to the sample, is used instead.
    """
    y = np.asarray(sample, dtype=np.float64)
    try:
        coef = sparse_solve(model, y, epsilon)
    except NotConvergedError as err:
        coef = err.best
    norm = np.linalg.norm(y)
    y = y / norm if norm > 0 else y
    res = class_residuals(model, y, coef)
    return int(np.argmin(res)), res


def src_predict_many(model: SrcModel, features) -> np.ndarray:
    return np.array([src_classify(model, f)[0] for f in np.atleast_2d(features)], dtype=np.int64)


def save_model(model: SrcModel, path) -> None:
    header = {"format": "src", "version": FORMAT_VERSION, "epsilon": model.epsilon,
              "max_sparsity": model.max_sparsity, "class_count": model.class_count}
    np.savez(path, header=json.dumps(header), dictionary=model.dictionary,
             atom_labels=model.atom_labels, atom_costs=model.atom_costs)


def load_model(path) -> SrcModel:
    with np.load(path) as f:
        header = json.loads(str(f["header"]))
        if header.get("format") != "src" or header.get("version") != FORMAT_VERSION:
            raise InvalidArgumentError(f"{path}: unsupported model format")
        return SrcModel(f["dictionary"], f["atom_labels"], header["epsilon"], header["max_sparsity"],
                        f["atom_costs"], header["class_count"])
