"""Histogram of oriented gradients.

Centered-difference gradients with edge replication, orientation-only
linear voting into cell histograms, and L2-Hys block normalization.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgumentError
from .image_core import ImageChip

NORM_EPS = 1e-6


@dataclass(frozen=True)
class HogParams:
    cell_size: int = 8
    block_cells: int = 2
    block_stride: int = 1
    bin_count: int = 9
    signed: bool = False
    clip: float = 0.2

    def __post_init__(self):
        if self.cell_size < 1 or self.block_cells < 1 or self.block_stride < 1:
            raise InvalidArgumentError("cell_size, block_cells and block_stride must be positive")
        if self.bin_count < 2:
            raise InvalidArgumentError("bin_count must be at least 2")
        if not 0.0 < self.clip <= 1.0:
            raise InvalidArgumentError("clip must lie in (0, 1]")

    @property
    def span(self) -> float:
        return 360.0 if self.signed else 180.0

    def to_dict(self) -> dict:
        return asdict(self)


def gradients(img, signed: bool = False):
    """Return (magnitude, orientation in degrees) fields for a single-channel image."""
    plane = img.gray if isinstance(img, ImageChip) else np.asarray(img, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] < 3 or plane.shape[1] < 3:
        raise InvalidArgumentError("gradients need a single-channel image of at least 3x3")
    padded = np.pad(plane, 1, mode="edge")
    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ori = np.degrees(np.arctan2(gy, gx))
    span = 360.0 if signed else 180.0
    ori = np.mod(ori, span)
    # mod can round a tiny negative angle up to exactly `span`
    ori[ori >= span] = 0.0
    return mag, ori


def cell_histograms(mag: np.ndarray, ori: np.ndarray, params: HogParams = HogParams()) -> np.ndarray:
    """Vote magnitudes into per-cell orientation histograms.

    Returns an array of shape (cells_y, cells_x, bin_count). Bin ``k`` is
    centered at ``(k + 0.5) * span / bin_count``; votes split linearly between
    the two nearest centers and wrap around.
    """
    if mag.shape != ori.shape:
        raise InvalidArgumentError("magnitude and orientation fields must share a shape")
    h, w = mag.shape
    cs = params.cell_size
    if h % cs or w % cs:
        raise InvalidArgumentError(f"image {w}x{h} not divisible by cell size {cs}")
    nb = params.bin_count
    pos = ori / (params.span / nb) - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64) % nb
    hi = (lo + 1) % nb

    ncy, ncx = h // cs, w // cs
    cell_index = (np.arange(h) // cs)[:, None] * ncx + (np.arange(w) // cs)[None, :]
    # both votes of a pixel back to back, pixels in row-major order, so every
    # bin accumulates in the same order as a plain per-pixel loop
    idx = np.stack([(cell_index * nb + lo).ravel(), (cell_index * nb + hi).ravel()], axis=1).ravel()
    votes = np.stack([(mag * (1.0 - frac)).ravel(), (mag * frac).ravel()], axis=1).ravel()
    flat = np.bincount(idx, weights=votes, minlength=ncy * ncx * nb)
    return flat.reshape(ncy, ncx, nb)


def _l2(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + NORM_EPS ** 2)


def block_normalize(cells: np.ndarray, params: HogParams = HogParams()) -> np.ndarray:
    ncy, ncx, nb = cells.shape
    bc, st = params.block_cells, params.block_stride
    if ncy < bc or ncx < bc:
        raise InvalidArgumentError("cell grid smaller than one block")
    nby = (ncy - bc) // st + 1
    nbx = (ncx - bc) // st + 1
    blocks = np.empty((nby, nbx, bc * bc * nb), dtype=np.float64)
    for by in range(nby):
        for bx in range(nbx):
            y0, x0 = by * st, bx * st
            blocks[by, bx] = cells[y0:y0 + bc, x0:x0 + bc].ravel()
    blocks = _l2(blocks)
    blocks = np.minimum(blocks, params.clip)
    blocks = _l2(blocks)
    return blocks.ravel()


def descriptor_dim(width: int, height: int, params: HogParams = HogParams()) -> int:
    bc, st = params.block_cells, params.block_stride
    nbx = (width // params.cell_size - bc) // st + 1
    nby = (height // params.cell_size - bc) // st + 1
    return nbx * nby * bc * bc * params.bin_count


def hog_descriptor(img: ImageChip, params: HogParams = HogParams()) -> np.ndarray:
    mag, ori = gradients(img, params.signed)
    return block_normalize(cell_histograms(mag, ori, params), params)
