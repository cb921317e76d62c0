"""Image chips, geometric normalization and pseudo-panchromatic conversion.

All intensities are normalized reals in [0, 1]. Pixel centers sit on integer
coordinates, ``x`` runs along columns and ``y`` down the rows.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateOrientationError, InvalidArgumentError, NumericError

DEFAULT_BINS = 256
MANIFEST_FIELDS = ("path", "label", "domain", "width", "height", "seed")
DOMAINS = ("real-analog", "synthetic")


@dataclass(frozen=True, eq=False)
class ImageChip:
    """Immutable raster of shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise InvalidArgumentError(f"chip must be HxW, HxWx1 or HxWx3, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidArgumentError("chip must have at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise NumericError("chip contains non-finite intensities")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidArgumentError("chip intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, width: int, height: int, channels: int, values: Sequence[float]) -> "ImageChip":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height * channels:
            raise InvalidArgumentError("data length must equal width*height*channels")
        return cls(values.reshape(height, width, channels))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def gray(self) -> np.ndarray:
        """The single plane of a one-channel chip as a 2-D array."""
        if self.channels != 1:
            raise InvalidArgumentError("expected a single-channel chip")
        return self.data[:, :, 0]

    def plane(self, channel: int) -> np.ndarray:
        if not 0 <= channel < self.channels:
            raise InvalidArgumentError(f"channel {channel} out of range for {self.channels}-channel chip")
        return self.data[:, :, channel]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, ImageChip):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def _chip(arr: np.ndarray) -> ImageChip:
    return ImageChip(np.clip(arr, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_count: int
    counts: np.ndarray
    channel: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size != self.bin_count:
            raise InvalidArgumentError("counts must have exactly bin_count entries")
        if self.bin_count < 2:
            raise InvalidArgumentError("bin_count must be at least 2")
        if np.any(counts < 0):
            raise InvalidArgumentError("histogram counts must be non-negative")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cdf(self) -> np.ndarray:
        if self.total == 0:
            raise InvalidArgumentError("histogram is empty")
        return np.cumsum(self.counts) / self.total


def save_histogram(hist: Histogram, path) -> None:
    Path(path).write_text(json.dumps({"bin_count": hist.bin_count, "counts": hist.counts.tolist()}))


def load_histogram(path, channel: int = 0) -> Histogram:
    """Load a target histogram from JSON (``bin_count``/``counts``) or whitespace text."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        counts = [int(tok) for tok in text.split()]
        return Histogram(len(counts), np.array(counts), channel)
    if isinstance(doc, list):
        return Histogram(len(doc), np.array(doc), channel)
    return Histogram(int(doc["bin_count"]), np.array(doc["counts"]), int(doc.get("channel", channel)))


@dataclass(frozen=True)
class PanchroParams:
    blue_gain: float = 0.6
    red_gamma: float = 0.9
    green_gamma: float = 1.1
    luma_weights: tuple = (0.299, 0.587, 0.114)

    def __post_init__(self):
        if not 0.0 <= self.blue_gain <= 1.0:
            raise InvalidArgumentError("blue_gain must lie in [0, 1]")
        if self.red_gamma <= 0 or self.green_gamma <= 0:
            raise InvalidArgumentError("gammas must be positive")
        _check_weights(self.luma_weights)
        object.__setattr__(self, "luma_weights", tuple(float(w) for w in self.luma_weights))

    def to_dict(self) -> dict:
        return {
            "blue_gain": self.blue_gain,
            "red_gamma": self.red_gamma,
            "green_gamma": self.green_gamma,
            "luma_weights": list(self.luma_weights),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PanchroParams":
        return cls(
            blue_gain=float(doc["blue_gain"]),
            red_gamma=float(doc["red_gamma"]),
            green_gamma=float(doc["green_gamma"]),
            luma_weights=tuple(doc["luma_weights"]),
        )


def _check_weights(weights) -> None:
    if len(weights) != 3:
        raise InvalidArgumentError("exactly three channel weights are required")
    if any(w < 0 for w in weights):
        raise InvalidArgumentError("channel weights must be non-negative")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise InvalidArgumentError("channel weights must sum to 1")


# -- intensity ops ---------------------------------------------------------


def to_grayscale(img: ImageChip, weights=(0.299, 0.587, 0.114)) -> ImageChip:
    if img.channels != 3:
        raise InvalidArgumentError("grayscale conversion needs a 3-channel chip")
    _check_weights(weights)
    out = img.data @ np.asarray(weights, dtype=np.float64)
    return _chip(out)


def quantize(values: np.ndarray, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Bin index of each intensity, rounding half up on the (bins-1) grid."""
    return np.floor(np.asarray(values) * (bins - 1) + 0.5).astype(np.int64)


def compute_histogram(img: ImageChip, channel: int = 0, bins: int = DEFAULT_BINS) -> Histogram:
    if bins < 2:
        raise InvalidArgumentError("bins must be at least 2")
    plane = img.plane(channel)
    counts = np.bincount(quantize(plane, bins).ravel(), minlength=bins)
    return Histogram(bins, counts, channel)


def specification_lut(source: Histogram, target: Histogram) -> np.ndarray:
    """Map each source bin to the smallest target bin whose CDF reaches the source CDF."""
    if target.bin_count != source.bin_count:
        raise InvalidArgumentError("source and target histograms must share binning")
    if target.total == 0:
        raise InvalidArgumentError("target histogram is empty")
    # integer cross-multiplication keeps the comparison exact
    src_cum = np.cumsum(source.counts) * target.total
    tgt_cum = np.cumsum(target.counts) * source.total
    return np.searchsorted(tgt_cum, src_cum, side="left").astype(np.int64)


def histogram_specification(img: ImageChip, target) -> ImageChip:
    """Remap intensities so each channel's histogram takes the target's shape.

    ``target`` is one Histogram applied to every channel, or one per channel.
    """
    targets = [target] * img.channels if isinstance(target, Histogram) else list(target)
    if len(targets) != img.channels:
        raise InvalidArgumentError("need one target histogram per channel")
    planes = []
    for c, tgt in enumerate(targets):
        if tgt.total == 0:
            raise InvalidArgumentError("target histogram is empty")
        bins = tgt.bin_count
        src = compute_histogram(img, c, bins)
        lut = specification_lut(src, tgt)
        planes.append(lut[quantize(img.plane(c), bins)] / (bins - 1))
    return ImageChip(np.stack(planes, axis=-1))


def panchromatic_simulate(img: ImageChip, params: PanchroParams = PanchroParams()) -> ImageChip:
    if img.channels != 3:
        raise InvalidArgumentError("panchromatic simulation needs a 3-channel chip")
    if params.red_gamma <= 0 or params.green_gamma <= 0:
        raise InvalidArgumentError("gammas must be positive")
    red = img.data[:, :, 0] ** params.red_gamma
    green = img.data[:, :, 1] ** params.green_gamma
    blue = img.data[:, :, 2] * params.blue_gain
    wr, wg, wb = params.luma_weights
    return _chip(wr * red + wg * green + wb * blue)


# -- geometry --------------------------------------------------------------


def estimate_orientation(img: ImageChip) -> float:
    """Principal-axis angle from intensity-weighted second central moments.

    The result lies in (-pi/2, pi/2]; angles grow from +x towards +y.
    """
    plane = img.gray
    mass = plane.sum()
    if mass <= 0 or np.ptp(plane) == 0:
        raise DegenerateOrientationError("orientation undefined for a constant image")
    ys, xs = np.indices(plane.shape, dtype=np.float64)
    cx = (plane * xs).sum() / mass
    cy = (plane * ys).sum() / mass
    dx, dy = xs - cx, ys - cy
    mu20 = (plane * dx * dx).sum() / mass
    mu02 = (plane * dy * dy).sum() / mass
    mu11 = (plane * dx * dy).sum() / mass
    scale = max(mu20, mu02, 1e-300)
    if abs(mu11) <= 1e-12 * scale:
        mu11 = 0.0
        if abs(mu20 - mu02) <= 1e-12 * scale:
            raise DegenerateOrientationError("isotropic intensity distribution has no principal axis")
    theta = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
    if theta <= -math.pi / 2:
        theta += math.pi
    return theta


def _bilinear(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray, border: str) -> np.ndarray:
    h, w = plane.shape
    if border == "clamp":
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    out = np.zeros(xs.shape, dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = np.where(inside, plane[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], 0.0)
            out += wx * wy * vals
    return out


def rotate_bilinear(img: ImageChip, angle: float) -> ImageChip:
    """Rotate content by ``angle`` radians about the image center.

    Samples falling outside the source read as 0.
    """
    if angle == 0:
        return img
    h, w = img.height, img.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.indices((h, w), dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    # inverse mapping: output pixel p reads source at R(-angle)(p - c) + c
    src_x = cx + c * (xs - cx) + s * (ys - cy)
    src_y = cy - s * (xs - cx) + c * (ys - cy)
    planes = [_bilinear(img.plane(k), src_x, src_y, "zero") for k in range(img.channels)]
    return _chip(np.stack(planes, axis=-1))


def resize_bilinear(img: ImageChip, w: int, h: int) -> ImageChip:
    """Align-corners bilinear resize with edge clamping.

    A one-pixel target axis samples the source center.
    """
    if w < 1 or h < 1:
        raise InvalidArgumentError("target dimensions must be at least 1")
    if (w, h) == (img.width, img.height):
        return img

    def grid(n_out, n_in):
        if n_out == 1:
            return np.array([(n_in - 1) / 2.0])
        return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))

    ys, xs = np.meshgrid(grid(h, img.height), grid(w, img.width), indexing="ij")
    planes = [_bilinear(img.plane(k), xs, ys, "clamp") for k in range(img.channels)]
    return _chip(np.stack(planes, axis=-1))


def crop(img: ImageChip, x: int, y: int, w: int, h: int) -> ImageChip:
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
        raise InvalidArgumentError(f"crop rectangle ({x},{y},{w},{h}) outside {img.width}x{img.height} image")
    return ImageChip(img.data[y:y + h, x:x + w, :])


def paste(base: ImageChip, patch: ImageChip, x: int, y: int) -> ImageChip:
    if patch.channels != base.channels:
        raise InvalidArgumentError("channel count mismatch")
    if x < 0 or y < 0 or x + patch.width > base.width or y + patch.height > base.height:
        raise InvalidArgumentError("patch does not fit inside base image")
    out = base.data.copy()
    out[y:y + patch.height, x:x + patch.width, :] = patch.data
    return ImageChip(out)


def align_chip(img: ImageChip, size: int = 128) -> ImageChip:
    """Rotate the principal axis onto +x and resize to ``size`` x ``size``."""
    gray = img if img.channels == 1 else to_grayscale(img)
    try:
        theta = estimate_orientation(gray)
    except DegenerateOrientationError:
        theta = 0.0
    return resize_bilinear(rotate_bilinear(img, -theta), size, size)


# -- files -----------------------------------------------------------------


def to_uint8(img: ImageChip) -> np.ndarray:
    return np.floor(img.data * 255.0 + 0.5).astype(np.uint8)


def write_png(img: ImageChip, path) -> None:
    arr = to_uint8(img)
    mode = "L" if img.channels == 1 else "RGB"
    Image.fromarray(arr[:, :, 0] if img.channels == 1 else arr, mode=mode).save(path, format="PNG")


def read_png(path) -> ImageChip:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return ImageChip(arr)


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: str
    domain: str
    width: int
    height: int
    seed: int | None = None


@dataclass
class Manifest:
    rows: list = field(default_factory=list)
    comments: list = field(default_factory=list)


def write_manifest(path, rows: Iterable[ManifestRow], comments: Iterable[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for row in rows:
            writer.writerow([row.path, row.label, row.domain, row.width, row.height,
                             "" if row.seed is None else row.seed])


def read_manifest(path) -> Manifest:
    comments, body = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif line.strip():
                body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
        raise InvalidArgumentError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}")
    rows = []
    for rec in reader:
        if rec["domain"] not in DOMAINS:
            raise InvalidArgumentError(f"{path}: unknown domain tag {rec['domain']!r}")
        rows.append(ManifestRow(
            path=rec["path"],
            label=rec["label"],
            domain=rec["domain"],
            width=int(rec["width"]),
            height=int(rec["height"]),
            seed=int(rec["seed"]) if rec["seed"] else None,
        ))
    return Manifest(rows, comments)
