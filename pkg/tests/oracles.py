"""Slow, straight-line reference implementations used only by the tests.

Each one is written from the operation's stated definition without reusing
any package internals, so agreement is meaningful.
"""

import itertools
import math

import numpy as np


def hog_vote_oracle(mag, ori, cell_size=8, bin_count=9, span=180.0):
    """Per-pixel loop: each pixel splits its magnitude between the two nearest bin centers."""
    h, w = mag.shape
    out = np.zeros((h // cell_size, w // cell_size, bin_count))
    width = span / bin_count
    for y in range(h):
        for x in range(w):
            pos = float(ori[y, x]) / width - 0.5
            lo = math.floor(pos)
            frac = pos - lo
            cy, cx = y // cell_size, x // cell_size
            out[cy, cx, lo % bin_count] += float(mag[y, x]) * (1.0 - frac)
            out[cy, cx, (lo + 1) % bin_count] += float(mag[y, x]) * frac
    return out


def _snap(v):
    r = round(v)
    return float(r) if abs(v - r) < 1e-9 else v


def _bilinear_at(plane, x, y):
    h, w = plane.shape
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bottom = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def lbp_code_oracle(plane, x, y, radius, samples=8):
    code = 0
    for k in range(samples):
        ang = 2.0 * math.pi * k / samples
        nx = _snap(x + radius * math.cos(ang))
        ny = _snap(y - radius * math.sin(ang))
        if _bilinear_at(plane, nx, ny) >= plane[y, x]:
            code |= 1 << k
    return code


def _uniform(code, samples=8):
    bits = [(code >> k) & 1 for k in range(samples)]
    return sum(bits[k] != bits[(k + 1) % samples] for k in range(samples)) <= 2


def hmlbp_retirement_oracle(plane, radii=(3.0, 2.0, 1.0), samples=8):
    """Pixels retired at each scale (plus the catch-all) under descend-on-non-uniform."""
    h, w = plane.shape
    m = math.ceil(radii[0])
    counts = [0] * (len(radii) + 1)
    for y in range(m, h - m):
        for x in range(m, w - m):
            for level, r in enumerate(radii):
                if _uniform(lbp_code_oracle(plane, x, y, r, samples), samples):
                    counts[level] += 1
                    break
            else:
                counts[-1] += 1
    return counts


def kron_projection_oracle(chip, mean, u0, u1):
    """(U1 kron U0) applied to the column-major vectorization of the centered chip.

    Returned in row-major core order so it is comparable with the package's output.
    """
    v = np.kron(u1, u0) @ (chip - mean).ravel(order="F")
    return v.reshape(u0.shape[0], u1.shape[0], order="F").ravel()


def unfold_oracle(samples, mode):
    """Nested-loop mode unfolding: the other chip index runs fastest, then the sample index."""
    m, i0, i1 = samples.shape
    if mode == 0:
        out = np.empty((i0, m * i1))
        for s in range(m):
            for a in range(i0):
                for b in range(i1):
                    out[a, s * i1 + b] = samples[s, a, b]
    else:
        out = np.empty((i1, m * i0))
        for s in range(m):
            for a in range(i0):
                for b in range(i1):
                    out[b, s * i0 + a] = samples[s, a, b]
    return out


def l1_ball_oracle(D, y, eps):
    """Exhaustive search for min ||x||_1 s.t. ||D x - y|| <= eps.

    On a support S with sign pattern s, the constrained least-squares optimum is
    x_S = G^-1 (D_S^T y - lam s) with lam fixing the residual norm at eps.
    Every support up to the row rank and every sign pattern is tried; the
    sign-consistent candidates compete on their L1 norm.
    """
    n = D.shape[1]
    best = (np.linalg.norm(np.zeros(1)), np.zeros(n)) if np.linalg.norm(y) <= eps else None
    for k in range(1, min(D.shape) + 1):
        for S in itertools.combinations(range(n), k):
            A = D[:, list(S)]
            if np.linalg.matrix_rank(A) < k:
                continue
            G = A.T @ A
            x_ls = np.linalg.solve(G, A.T @ y)
            r0 = y - A @ x_ls
            slack = eps * eps - r0 @ r0
            if slack < 0:
                continue
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                s = np.array(signs)
                g = np.linalg.solve(G, s)
                xs = x_ls - math.sqrt(slack) / np.linalg.norm(A @ g) * g
                if np.any(np.sign(xs) != s):
                    continue
                l1 = np.abs(xs).sum()
                if best is None or l1 < best[0]:
                    x = np.zeros(n)
                    x[list(S)] = xs
                    best = (l1, x)
    return best[1]


def sparse_instance(seed, atoms=6, dim=4):
    """Unit-norm random dictionary and a normalized 2-sparse combination of its atoms."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((atoms, dim))
    idx = rng.choice(atoms, 2, replace=False)
    coef = rng.uniform(0.5, 1.5, 2) * rng.choice([-1.0, 1.0], 2)
    D = (X / np.linalg.norm(X, axis=1, keepdims=True)).T
    y = D[:, idx] @ coef
    return X, y / np.linalg.norm(y)
