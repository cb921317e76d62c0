"""Procedural renderer for labeled synthetic vessel chips.

Vessels are drawn as analytic shapes in a ground plane whose x axis runs
along the hull (bow towards +x), so every chip comes out aligned. An oblique
sensor foreshortens the ground plane by ``cos(off_nadir)`` along the sensor
azimuth. All randomness comes from counter-based Philox streams keyed by a
seed, so any single chip can be regenerated in isolation.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import CLASS_NAMES
from .errors import InvalidArgumentError
from .image_core import (
    Histogram,
    ImageChip,
    ManifestRow,
    PanchroParams,
    histogram_specification,
    panchromatic_simulate,
    write_manifest,
    write_png,
)

CONFIG_VERSION = 1
_MASK64 = (1 << 64) - 1

# stream ids for the Philox counter
STREAM_SCENE = 1
STREAM_SEA = 2
STREAM_DECK = 3
STREAM_MODIFIERS = 4
STREAM_SENSOR_NOISE = 5

# (off-nadir, azimuth) of the discrete sensor constellation
SENSOR_POSES = (
    ((0.0, 0.0),)
    + tuple((15.0, 60.0 * k) for k in range(6))
    + tuple((35.0, 45.0 * k) for k in range(8))
)


@dataclass(frozen=True)
class VesselTemplate:
    vessel_class: str
    length_beam_ratio: float
    deck_pattern: str
    base_albedo: float
    superstructure_position: float | None

    def __post_init__(self):
        if self.length_beam_ratio <= 1:
            raise InvalidArgumentError("length_beam_ratio must exceed 1")


TEMPLATES = {
    "barge": VesselTemplate("barge", 3.2, "flat_deck", 0.50, None),
    "cargo": VesselTemplate("cargo", 6.0, "hatch_rows", 0.55, 0.10),
    "container": VesselTemplate("container", 7.0, "container_stacks", 0.60, 0.22),
    "tanker": VesselTemplate("tanker", 5.5, "pipeline_spine", 0.50, 0.06),
}

WAKE_CLASSES = ("cargo", "container", "tanker")
BARGE_MODIFIER_CLASSES = ("barge",)


@dataclass(frozen=True)
class RenderConstants:
    """Free constants of the renderer; serialized to JSON for provenance."""

    version: int = CONFIG_VERSION
    sea_rgb: tuple = (0.06, 0.14, 0.22)
    sea_noise_octaves: int = 4
    sea_noise_base_cells: int = 4
    sea_noise_persistence: float = 0.5
    sea_amplitude_per_state: float = 0.025
    sensor_noise: float = 0.002
    contrast_jitter: float = 0.1
    albedo_offset: float = 0.0
    ambient: float = 0.35
    hull_length_fraction: float = 0.95
    freeboard: float = 0.04
    superstructure_height: float = 0.10
    shadow_strength: float = 0.55
    discrete_sensors: bool = False
    panchro: PanchroParams = field(default_factory=PanchroParams)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["sea_rgb"] = list(self.sea_rgb)
        doc["panchro"] = self.panchro.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RenderConstants":
        doc = dict(doc)
        if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise InvalidArgumentError(f"unsupported render constants version {doc.get('version')}")
        if "panchro" in doc:
            doc["panchro"] = PanchroParams.from_dict(doc["panchro"])
        if "sea_rgb" in doc:
            doc["sea_rgb"] = tuple(doc["sea_rgb"])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown render constant fields: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def load_constants(path) -> RenderConstants:
    return RenderConstants.from_dict(json.loads(Path(path).read_text()))


def domain_shift_config(base: RenderConstants, shift_id: str) -> RenderConstants:
    """Perturbed constants for the two sides of a synthetic domain gap.

    Domain ``A`` plays the synthetic source and ``B`` the pseudo-real target.
    They differ in sea-noise spectrum, hull albedo offset, sea tint and
    panchromatic constants while sharing all vessel geometry.
    """
    if shift_id == "A":
        return replace(base, albedo_offset=base.albedo_offset + 0.1)
    if shift_id == "B":
        return replace(
            base,
            albedo_offset=base.albedo_offset - 0.1,
            sea_noise_base_cells=base.sea_noise_base_cells * 3,
            sea_noise_persistence=0.7,
            sea_amplitude_per_state=base.sea_amplitude_per_state * 1.6,
            sea_rgb=tuple(c * 1.3 for c in base.sea_rgb),
            panchro=PanchroParams(blue_gain=0.9, red_gamma=1.2, green_gamma=0.8,
                                  luma_weights=(0.25, 0.5, 0.25)),
        )
    raise InvalidArgumentError(f"unknown domain shift {shift_id!r}; expected 'A' or 'B'")


@dataclass(frozen=True)
class SceneParams:
    vessel_class: str
    sun_elevation: float
    sun_azimuth: float
    sensor_off_nadir: float
    sensor_azimuth: float
    sea_state: int
    wake: bool
    secondary_vessel: bool
    fenders: bool
    hull_scale: float
    seed: int

    def __post_init__(self):
        if self.vessel_class not in TEMPLATES:
            raise InvalidArgumentError(f"unknown vessel class {self.vessel_class!r}")
        checks = (
            (15.0 <= self.sun_elevation <= 90.0, "sun_elevation"),
            (0.0 <= self.sun_azimuth < 360.0, "sun_azimuth"),
            (0.0 <= self.sensor_off_nadir <= 45.0, "sensor_off_nadir"),
            (0.0 <= self.sensor_azimuth < 360.0, "sensor_azimuth"),
            (0 <= self.sea_state <= 5, "sea_state"),
            (0.8 <= self.hull_scale <= 1.2, "hull_scale"),
            (0 <= self.seed <= _MASK64, "seed"),
        )
        for ok, name in checks:
            if not ok:
                raise InvalidArgumentError(f"{name} out of range")
        if self.wake and self.vessel_class not in WAKE_CLASSES:
            raise InvalidArgumentError(f"{self.vessel_class} chips are rendered wake-free")


def philox(seed: int, *counter: int) -> np.random.Generator:
    """Generator keyed by ``seed`` with up to four counter words."""
    words = [int(c) & _MASK64 for c in counter] + [0] * (4 - len(counter))
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64, counter=words))


def sample_scene(master_seed: int, vessel_class: str, index: int,
                 discrete_sensors: bool = False) -> SceneParams:
    if vessel_class not in TEMPLATES:
        raise InvalidArgumentError(f"unknown vessel class {vessel_class!r}")
    rng = philox(master_seed, index, CLASS_NAMES.index(vessel_class), STREAM_SCENE)
    sun_elevation = float(rng.uniform(15.0, 90.0))
    sun_azimuth = float(rng.uniform(0.0, 360.0))
    if discrete_sensors:
        off_nadir, sensor_azimuth = SENSOR_POSES[int(rng.integers(len(SENSOR_POSES)))]
        rng.uniform(size=2)  # keep later draws aligned with the continuous mode
    else:
        off_nadir = float(rng.uniform(0.0, 45.0))
        sensor_azimuth = float(rng.uniform(0.0, 360.0))
    sea_state = int(rng.integers(0, 6))
    flags = rng.uniform(size=3) < 0.5
    hull_scale = float(rng.uniform(0.8, 1.2))
    seed = int(rng.integers(0, _MASK64, dtype=np.uint64, endpoint=True))
    moving = vessel_class in WAKE_CLASSES
    barge = vessel_class in BARGE_MODIFIER_CLASSES
    return SceneParams(
        vessel_class=vessel_class,
        sun_elevation=sun_elevation,
        sun_azimuth=sun_azimuth % 360.0,
        sensor_off_nadir=off_nadir,
        sensor_azimuth=sensor_azimuth % 360.0,
        sea_state=sea_state,
        wake=bool(flags[0]) and moving,
        secondary_vessel=bool(flags[1]) and barge,
        fenders=bool(flags[2]) and barge,
        hull_scale=hull_scale,
        seed=seed,
    )


# -- rasterization helpers ---------------------------------------------------


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(size: int, cells: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth lattice noise in [0, 1] with ``cells`` lattice cells across the chip."""
    grid = rng.random((cells + 2, cells + 2))
    coords = np.arange(size) * (cells / size)
    i = np.floor(coords).astype(int)
    f = _fade(coords - i)
    iy, ix = np.meshgrid(i, i, indexing="ij")
    fy, fx = np.meshgrid(f, f, indexing="ij")
    top = grid[iy, ix] + fx * (grid[iy, ix + 1] - grid[iy, ix])
    bottom = grid[iy + 1, ix] + fx * (grid[iy + 1, ix + 1] - grid[iy + 1, ix])
    return top + fy * (bottom - top)


def fractal_noise(size: int, constants: RenderConstants, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean multi-octave value noise with peak amplitude about 1."""
    total = np.zeros((size, size))
    amp, norm = 1.0, 0.0
    cells = constants.sea_noise_base_cells
    for _ in range(constants.sea_noise_octaves):
        total += amp * (value_noise(size, min(cells, size), rng) - 0.5)
        norm += amp
        amp *= constants.sea_noise_persistence
        cells *= 2
    return 2.0 * total / norm


def _box(s, t, s0, s1, t0, t1):
    """Anti-aliased coverage of an axis-aligned rectangle in hull coordinates."""
    cs = np.clip(np.minimum(s - s0, s1 - s) + 0.5, 0.0, 1.0)
    ct = np.clip(np.minimum(t - t0, t1 - t) + 0.5, 0.0, 1.0)
    return cs * ct


def _hull_coverage(s, t, length, beam, pattern):
    half_l, half_b = length / 2.0, beam / 2.0
    if pattern == "flat_deck":
        r = 0.15 * beam
        # rounded rectangle via distance to the inner rectangle
        ds = np.maximum(np.abs(s) - (half_l - r), 0.0)
        dt = np.maximum(np.abs(t) - (half_b - r), 0.0)
        dist = np.hypot(ds, dt) - r
        return np.clip(0.5 - dist, 0.0, 1.0)
    bow_start = half_l - 0.2 * length
    stern_start = -half_l + 0.04 * length
    u_bow = np.clip((s - bow_start) / (half_l - bow_start), 0.0, 1.0)
    u_stern = np.clip((stern_start - s) / (stern_start + half_l), 0.0, 1.0)
    width = half_b * np.sqrt(np.clip(1.0 - u_bow ** 2, 0.0, 1.0)) * (1.0 - 0.25 * u_stern ** 2)
    cover_t = np.clip(width - np.abs(t) + 0.5, 0.0, 1.0)
    cover_s = np.clip(np.minimum(s + half_l, half_l - s) + 0.5, 0.0, 1.0)
    return cover_t * cover_s


@dataclass
class RenderLayers:
    image: ImageChip
    hull_mask: np.ndarray
    shadow_mask: np.ndarray


def _ground_coords(size: int, params: SceneParams):
    c = (size - 1) / 2.0
    ys, xs = np.indices((size, size), dtype=np.float64)
    px, py = xs - c, ys - c
    az = math.radians(params.sensor_azimuth)
    ux, uy = math.cos(az), math.sin(az)
    stretch = 1.0 / math.cos(math.radians(params.sensor_off_nadir)) - 1.0
    along = px * ux + py * uy
    return px + stretch * along * ux, py + stretch * along * uy


def _deck(s, t, length, beam, template, rng, albedo):
    """RGB deck reflectance and a superstructure mask, both in hull coordinates."""
    half_l, half_b = length / 2.0, beam / 2.0
    rgb = np.empty(s.shape + (3,))
    base = np.array([albedo, albedo, albedo])
    pattern = template.deck_pattern
    sup = np.zeros(s.shape)
    if template.superstructure_position is not None:
        s0 = -half_l + template.superstructure_position * length
        sup = _box(s, t, s0, s0 + 0.07 * length, -0.42 * beam, 0.42 * beam)

    if pattern == "flat_deck":
        rgb[:] = base * np.array([1.0, 0.97, 0.9])
        rim = 1.0 - _box(s, t, -half_l + 1.5, half_l - 1.5, -half_b + 1.5, half_b - 1.5)
        rgb += 0.08 * rim[..., None]
        rgb += 0.03 * (rng.random(s.shape)[..., None] - 0.5)
    elif pattern == "pipeline_spine":
        rgb[:] = base * np.array([0.85, 0.55, 0.45])
        spine = _box(s, t, -half_l + 0.12 * length, half_l - 0.15 * length, -0.06 * beam, 0.06 * beam)
        manifold = _box(s, t, -0.03 * length, 0.03 * length, -0.4 * beam, 0.4 * beam)
        lines = np.maximum(spine, 0.7 * manifold)
        rgb = rgb * (1 - lines[..., None]) + 0.92 * lines[..., None]
    elif pattern == "hatch_rows":
        rgb[:] = base * np.array([0.75, 0.62, 0.55])
        n_hatch = int(rng.integers(5, 8))
        first = -half_l + 0.22 * length
        last = half_l - 0.22 * length
        pitch = (last - first) / n_hatch
        hatch_rgb = np.array([0.35, 0.45, 0.38]) + 0.05 * rng.standard_normal(3)
        for k in range(n_hatch):
            s0 = first + k * pitch + 0.15 * pitch
            cover = _box(s, t, s0, s0 + 0.7 * pitch, -0.36 * beam, 0.36 * beam)
            rgb = rgb * (1 - cover[..., None]) + hatch_rgb * cover[..., None]
    elif pattern == "container_stacks":
        rgb[:] = base * np.array([0.6, 0.6, 0.62])
        palette = np.array([
            [0.85, 0.25, 0.2], [0.25, 0.4, 0.8], [0.9, 0.9, 0.9], [0.9, 0.55, 0.2],
            [0.3, 0.65, 0.35], [0.8, 0.8, 0.3], [0.6, 0.6, 0.65],
        ])
        first = -half_l + (template.superstructure_position + 0.09) * length
        last = half_l - 0.12 * length
        n_bays = 12
        pitch = (last - first) / n_bays
        rows = 5
        row_w = 0.84 * beam / rows
        for b in range(n_bays):
            for r in range(rows):
                if rng.random() < 0.12:
                    continue
                color = palette[int(rng.integers(len(palette)))]
                s0 = first + b * pitch + 0.08 * pitch
                t0 = -0.42 * beam + r * row_w
                cover = _box(s, t, s0, s0 + 0.84 * pitch, t0 + 0.1 * row_w, t0 + 0.9 * row_w)
                rgb = rgb * (1 - cover[..., None]) + color * cover[..., None]
    else:
        raise InvalidArgumentError(f"unknown deck pattern {pattern!r}")

    rgb = rgb * (1 - sup[..., None]) + 0.95 * sup[..., None]
    return np.clip(rgb, 0.0, 1.0), sup


def _shifted_max(cover_fn, gx, gy, dx, dy, samples=10):
    """Max of ``cover_fn`` over points displaced by t*(dx, dy), t in (0, 1]."""
    out = np.zeros(gx.shape)
    if dx == 0 and dy == 0:
        return out
    for k in range(1, samples + 1):
        f = k / samples
        out = np.maximum(out, cover_fn(gx + f * dx, gy + f * dy))
    return out


def render_layers(params: SceneParams, size: int = 128,
                  constants: RenderConstants = RenderConstants()) -> RenderLayers:
    if size < 64:
        raise InvalidArgumentError("chips must be at least 64 pixels across")
    template = TEMPLATES[params.vessel_class]
    gx, gy = _ground_coords(size, params)
    length = constants.hull_length_fraction * size * params.hull_scale / 1.2
    beam = length / template.length_beam_ratio
    albedo = float(np.clip(template.base_albedo + constants.albedo_offset, 0.05, 1.0))

    elev = math.radians(params.sun_elevation)
    light = constants.ambient + (1.0 - constants.ambient) * math.sin(elev)

    # (1) sea
    sea_rng = philox(params.seed, STREAM_SEA)
    amp = constants.sea_amplitude_per_state * params.sea_state
    waves = fractal_noise(size, constants, sea_rng)
    sea = np.asarray(constants.sea_rgb)[None, None, :] + amp * waves[..., None] * np.array([0.8, 0.9, 1.0])
    sea = sea * light

    # (2) hull, in ground coordinates
    def hull_cover(x, y):
        return _hull_coverage(x, y, length, beam, template.deck_pattern)

    hull = hull_cover(gx, gy)

    # (3) deck pattern
    deck_rng = philox(params.seed, STREAM_DECK)
    deck_rgb, sup = _deck(gx, gy, length, beam, template, deck_rng, albedo)
    deck_rgb = deck_rgb * light

    # (4) shadows cast away from the sun
    cot = math.cos(elev) / math.sin(elev)
    if cot < 1e-12:
        cot = 0.0
    az = math.radians(params.sun_azimuth)
    towards_sun = np.array([math.cos(az), math.sin(az)])
    reach = constants.freeboard * length * cot
    dx, dy = towards_sun * reach
    hull_shadow = _shifted_max(hull_cover, gx, gy, dx, dy) * (1.0 - hull)

    sup_shadow = np.zeros_like(hull)
    if template.superstructure_position is not None and cot > 0:
        s0 = -length / 2.0 + template.superstructure_position * length

        def sup_cover(x, y):
            return _box(x, y, s0, s0 + 0.07 * length, -0.42 * beam, 0.42 * beam)

        reach_s = constants.superstructure_height * length * cot
        sup_shadow = _shifted_max(sup_cover, gx, gy, *(towards_sun * reach_s)) * (1.0 - sup)

    mod_rng = philox(params.seed, STREAM_MODIFIERS)
    # (5) modifiers
    if params.wake:
        behind = -length / 2.0 - gx
        spread = np.abs(gy) - (0.25 * beam + behind * math.tan(math.radians(9.0)))
        streak = (behind > 0) * np.clip(0.5 - spread, 0.0, 1.0) * np.exp(-behind / (0.45 * length))
        foam = streak * (0.35 + 0.15 * mod_rng.random(streak.shape))
        sea = sea + foam[..., None]
    if params.secondary_vessel:
        tug_len = 0.28 * length
        tug_beam = tug_len / 3.0
        side = 1.0 if mod_rng.random() < 0.5 else -1.0
        s_off = mod_rng.uniform(-0.3, 0.3) * length
        t_off = side * (beam / 2.0 + 0.6 * tug_beam + 2.0)
        tug = _hull_coverage(gx - s_off, gy - t_off, tug_len, tug_beam, "hatch_rows")
        cabin = _box(gx - s_off, gy - t_off, -0.2 * tug_len, 0.1 * tug_len, -0.3 * tug_beam, 0.3 * tug_beam)
        tug_rgb = (0.55 + 0.35 * cabin)[..., None] * light * np.array([0.9, 0.9, 0.95])
        sea = sea * (1 - tug[..., None]) + tug_rgb * tug[..., None]
    fender_mask = np.zeros_like(hull)
    if params.fenders:
        spots = np.linspace(-0.4, 0.4, 7) * length
        for sgn in (-1.0, 1.0):
            for s_k in spots:
                d = np.hypot(gx - s_k, gy - sgn * beam / 2.0)
                fender_mask = np.maximum(fender_mask, np.clip(1.8 - d, 0.0, 1.0))

    shade = 1.0 - constants.shadow_strength * hull_shadow
    img = sea * shade[..., None]
    deck_shade = 1.0 - constants.shadow_strength * sup_shadow
    img = img * (1 - hull[..., None]) + (deck_rgb * deck_shade[..., None]) * hull[..., None]
    img = img * (1 - fender_mask[..., None]) + 0.06 * fender_mask[..., None]

    # global contrast jitter and sensor noise
    noise_rng = philox(params.seed, STREAM_SENSOR_NOISE)
    gain = 1.0 + constants.contrast_jitter * (2.0 * noise_rng.random() - 1.0)
    img = img * gain + constants.sensor_noise * noise_rng.standard_normal(img.shape)

    # (6) clamp
    return RenderLayers(
        image=ImageChip(np.clip(img, 0.0, 1.0)),
        hull_mask=hull >= 0.5,
        shadow_mask=hull_shadow >= 0.5,
    )


def render_chip(params: SceneParams, size: int = 128,
                constants: RenderConstants = RenderConstants()) -> ImageChip:
    return render_layers(params, size, constants).image


def chip_path(vessel_class: str, index: int) -> str:
    return f"{vessel_class}/{vessel_class}_{index:05d}.png"


def _render_job(args):
    master_seed, vessel_class, index, size, constants, target = args
    params = sample_scene(master_seed, vessel_class, index, constants.discrete_sensors)
    chip = panchromatic_simulate(render_chip(params, size, constants), constants.panchro)
    if target is not None:
        chip = histogram_specification(chip, target)
    return params.seed, chip


def generate_dataset(master_seed: int, per_class: int, size: int = 128,
                     panchro: PanchroParams | None = None, out_dir=".",
                     constants: RenderConstants = RenderConstants(), domain: str = "synthetic",
                     target_histogram: Histogram | None = None, jobs: int = 1) -> Path:
    """Render, post-process and write ``4 * per_class`` chips plus their manifest.

    ``panchro`` overrides the panchromatic constants carried by ``constants``.
    Returns the manifest path.
    """
    if per_class < 1:
        raise InvalidArgumentError("per_class must be at least 1")
    if panchro is not None:
        constants = replace(constants, panchro=panchro)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name in CLASS_NAMES:
            (out / name).mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    jobs_list = [(master_seed, name, i, size, constants, target_histogram)
                 for name in CLASS_NAMES for i in range(per_class)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_render_job, jobs_list, chunksize=8))
    else:
        results = [_render_job(a) for a in jobs_list]

    rows = []
    for (_, name, i, *_rest), (seed, chip) in zip(jobs_list, results):
        rel = chip_path(name, i)
        try:
            write_png(chip, out / rel)
        except OSError as exc:
            raise OSError(f"failed writing {out / rel}: {exc}") from exc
        rows.append(ManifestRow(rel, name, domain, size, size, seed))

    (out / "render_constants.json").write_text(constants.to_json() + "\n")
    comments = [
        f"render_constants_sha256={constants.sha256()}",
        f"render_constants={constants.to_json()}",
        f"master_seed={master_seed}",
        f"target_histogram={'none' if target_histogram is None else 'custom'}",
    ]
    manifest = out / "manifest.csv"
    write_manifest(manifest, rows, comments)
    return manifest


def default_jobs() -> int:
    """Cores this process may run on."""
    try:
        return len(os.sched_getaffinity(0)) or 1
    except AttributeError:
        return os.cpu_count() or 1
