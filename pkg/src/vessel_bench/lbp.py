"""Hierarchical multi-scale local binary patterns.

Pixels are first coded at the largest radius; those yielding a uniform
pattern are histogrammed there and retired, the rest descend to the next
smaller radius. Whatever is still non-uniform after the smallest radius
lands in a single catch-all bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError
from .image_core import ImageChip


@dataclass(frozen=True)
class LbpScale:
    radius: float
    samples: int = 8

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidArgumentError("radius must be positive")
        if self.samples < 4:
            raise InvalidArgumentError("at least 4 samples are required")

    def offsets(self) -> np.ndarray:
        """(dx, dy) of each neighbor; k=0 on +x, counter-clockwise as displayed (y points down)."""
        k = np.arange(self.samples)
        ang = 2.0 * np.pi * k / self.samples
        # rounding snaps axis-aligned neighbors onto exact pixel centers
        dx = np.round(self.radius * np.cos(ang), 12)
        dy = np.round(-self.radius * np.sin(ang), 12)
        return np.stack([dx, dy], axis=1)


def _default_scales():
    return (LbpScale(3.0), LbpScale(2.0), LbpScale(1.0))


@dataclass(frozen=True)
class HmlbpParams:
    scales: tuple = field(default_factory=_default_scales)
    normalize: bool = True

    def __post_init__(self):
        scales = tuple(self.scales)
        if not scales:
            raise InvalidArgumentError("at least one scale is required")
        if any(a.radius <= b.radius for a, b in zip(scales, scales[1:])):
            raise InvalidArgumentError("radii must be strictly decreasing")
        if len({s.samples for s in scales}) != 1:
            raise InvalidArgumentError("all scales must share the same sample count")
        object.__setattr__(self, "scales", scales)

    @property
    def samples(self) -> int:
        return self.scales[0].samples

    def to_dict(self) -> dict:
        return {"scales": [[s.radius, s.samples] for s in self.scales], "normalize": self.normalize}

    @classmethod
    def from_dict(cls, doc: dict) -> "HmlbpParams":
        return cls(tuple(LbpScale(float(r), int(p)) for r, p in doc["scales"]), bool(doc.get("normalize", True)))


def _margin(radius: float) -> int:
    return int(math.ceil(radius - 1e-12))


def transitions(code: int, samples: int = 8) -> int:
    if not 0 <= code < (1 << samples):
        raise InvalidArgumentError(f"code {code} out of range for P={samples}")
    rotated = ((code >> 1) | ((code & 1) << (samples - 1)))
    return bin(code ^ rotated).count("1")


def is_uniform(code: int, samples: int = 8) -> bool:
    return transitions(code, samples) <= 2


@lru_cache(maxsize=None)
def uniform_table(samples: int = 8) -> np.ndarray:
    """Bin index of each code among the uniform codes (ascending), -1 if non-uniform."""
    table = np.full(1 << samples, -1, dtype=np.int64)
    nxt = 0
    for code in range(1 << samples):
        if is_uniform(code, samples):
            table[code] = nxt
            nxt += 1
    table.setflags(write=False)
    return table


def uniform_count(samples: int = 8) -> int:
    return samples * (samples - 1) + 2


def _sample(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
    bottom = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def lbp_code(img, x: int, y: int, scale: LbpScale) -> int:
    plane = img.gray if isinstance(img, ImageChip) else np.asarray(img, dtype=np.float64)
    h, w = plane.shape
    m = _margin(scale.radius)
    if x - m < 0 or y - m < 0 or x + m > w - 1 or y + m > h - 1:
        raise InvalidArgumentError(f"sampling circle of radius {scale.radius} at ({x},{y}) leaves the image")
    center = plane[y, x]
    code = 0
    for k, (dx, dy) in enumerate(scale.offsets()):
        if _sample(plane, np.array(x + dx), np.array(y + dy)) >= center:
            code |= 1 << k
    return code


def lbp_codes(plane: np.ndarray, scale: LbpScale, margin: int) -> np.ndarray:
    """Codes for every pixel at least ``margin`` pixels from the border."""
    h, w = plane.shape
    if margin < _margin(scale.radius) or h <= 2 * margin or w <= 2 * margin:
        raise InvalidArgumentError("image too small for the requested radius")
    ys, xs = np.mgrid[margin:h - margin, margin:w - margin].astype(np.float64)
    center = plane[margin:h - margin, margin:w - margin]
    codes = np.zeros(center.shape, dtype=np.int64)
    for k, (dx, dy) in enumerate(scale.offsets()):
        codes |= (_sample(plane, xs + dx, ys + dy) >= center).astype(np.int64) << k
    return codes


def descriptor_dim(params: HmlbpParams = HmlbpParams()) -> int:
    return uniform_count(params.samples) * len(params.scales) + 1


def hmlbp_histogram(img, params: HmlbpParams = HmlbpParams()):
    """Raw (un-normalized) descriptor and the number of pixels retired at each level.

    The retirement list has one entry per scale plus the catch-all.
    """
    plane = img.gray if isinstance(img, ImageChip) else np.asarray(img, dtype=np.float64)
    P = params.samples
    table = uniform_table(P)
    nu = uniform_count(P)
    margin = _margin(params.scales[0].radius)
    hist = np.zeros(descriptor_dim(params), dtype=np.float64)
    pending = None
    retired = []
    for level, scale in enumerate(params.scales):
        codes = lbp_codes(plane, scale, margin)
        bins = table[codes]
        if pending is None:
            pending = np.ones(codes.shape, dtype=bool)
        take = pending & (bins >= 0)
        hist[level * nu:(level + 1) * nu] = np.bincount(bins[take], minlength=nu)
        retired.append(int(take.sum()))
        pending &= ~take
    leftover = int(pending.sum())
    hist[-1] = leftover
    retired.append(leftover)
    return hist, retired


def hmlbp_descriptor(img, params: HmlbpParams = HmlbpParams()) -> np.ndarray:
    hist, _ = hmlbp_histogram(img, params)
    if params.normalize:
        total = hist.sum()
        if total > 0:
            hist = hist / total
    return hist
