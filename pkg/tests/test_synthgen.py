import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vessel_bench import CLASS_NAMES
from vessel_bench.errors import InvalidArgumentError
from vessel_bench.hog import hog_descriptor
from vessel_bench.image_core import panchromatic_simulate, read_manifest
from vessel_bench.synthgen import (
    SENSOR_POSES,
    RenderConstants,
    SceneParams,
    domain_shift_config,
    generate_dataset,
    load_constants,
    render_chip,
    render_layers,
    sample_scene,
)


def test_sample_scene_deterministic():
    assert sample_scene(7, "cargo", 3) == sample_scene(7, "cargo", 3)
    assert sample_scene(7, "cargo", 3) != sample_scene(7, "cargo", 4)
    assert sample_scene(7, "cargo", 3) != sample_scene(8, "cargo", 3)


def test_sun_elevation_mean():
    draws = [sample_scene(1, CLASS_NAMES[i % 4], i).sun_elevation for i in range(10_000)]
    assert abs(np.mean(draws) - 52.5) < 3.0


def test_barge_never_has_wake():
    scenes = [sample_scene(2, "barge", i) for i in range(500)]
    assert not any(s.wake for s in scenes)
    assert any(s.fenders for s in scenes) and any(s.secondary_vessel for s in scenes)
    moving = [sample_scene(2, "tanker", i) for i in range(200)]
    assert any(s.wake for s in moving) and not any(s.fenders for s in moving)


def test_range_invariants_over_many_draws():
    # SceneParams validates its own ranges on construction
    for i in range(100_000):
        s = sample_scene(3, CLASS_NAMES[i % 4], i // 4)
        assert 15.0 <= s.sun_elevation <= 90.0 and 0 <= s.sea_state <= 5


@given(st.integers(0, 2**63), st.sampled_from(CLASS_NAMES), st.integers(0, 10**6))
def test_discrete_sensor_mode(seed, cls, index):
    s = sample_scene(seed, cls, index, discrete_sensors=True)
    assert (s.sensor_off_nadir, s.sensor_azimuth) in SENSOR_POSES


def test_scene_validation():
    good = sample_scene(0, "cargo", 0)
    with pytest.raises(InvalidArgumentError):
        dataclasses.replace(good, sun_elevation=10.0)
    with pytest.raises(InvalidArgumentError):
        dataclasses.replace(good, vessel_class="barge", wake=True)
    with pytest.raises(InvalidArgumentError):
        sample_scene(0, "yacht", 0)


def test_render_deterministic():
    p = sample_scene(4, "container", 1)
    a, b = render_chip(p, 64), render_chip(p, 64)
    assert np.array_equal(a.data, b.data)
    assert a.data.shape == (64, 64, 3)
    assert a.data.min() >= 0.0 and a.data.max() <= 1.0


def test_overhead_sun_casts_no_shadow():
    for i, cls in enumerate(CLASS_NAMES):
        p = dataclasses.replace(sample_scene(5, cls, i), sun_elevation=90.0)
        assert not render_layers(p, 96).shadow_mask.any()
    low = dataclasses.replace(sample_scene(5, "tanker", 0), sun_elevation=20.0)
    assert render_layers(low, 96).shadow_mask.any()


def test_hull_brighter_than_sea():
    gaps = []
    for i in range(100):
        layers = render_layers(sample_scene(11, CLASS_NAMES[i % 4], i), 128)
        g = panchromatic_simulate(layers.image).gray
        sea = ~layers.hull_mask & ~layers.shadow_mask
        gaps.append(g[layers.hull_mask].mean() - g[sea].mean())
    assert min(gaps) >= 0.1


def test_domain_constants_differ():
    base = RenderConstants()
    a, b = domain_shift_config(base, "A").to_dict(), domain_shift_config(base, "B").to_dict()
    assert sum(a[k] != b[k] for k in a) >= 3
    with pytest.raises(InvalidArgumentError):
        domain_shift_config(base, "C")


def test_domain_renders_differ():
    base = RenderConstants()
    A, B = domain_shift_config(base, "A"), domain_shift_config(base, "B")
    diffs = []
    for i in range(20):
        p = sample_scene(3, CLASS_NAMES[i % 4], i)
        a = panchromatic_simulate(render_chip(p, 64, A), A.panchro).data
        b = panchromatic_simulate(render_chip(p, 64, B), B.panchro).data
        diffs.append(np.abs(a - b).mean())
    assert min(diffs) > 0.02


def test_constants_round_trip(tmp_path):
    c = domain_shift_config(RenderConstants(), "B")
    (tmp_path / "c.json").write_text(c.to_json())
    back = load_constants(tmp_path / "c.json")
    assert back == c and back.sha256() == c.sha256()
    with pytest.raises(InvalidArgumentError):
        RenderConstants.from_dict({"bogus": 1})


def test_generate_small_dataset(tmp_path):
    m1 = generate_dataset(9, 2, 64, out_dir=tmp_path / "a")
    m2 = generate_dataset(9, 2, 64, out_dir=tmp_path / "b", jobs=2)
    manifest = read_manifest(m1)
    rows = manifest.rows
    assert any(c.startswith("render_constants_sha256=") for c in manifest.comments)
    assert len(rows) == 8
    assert sorted(r.label for r in rows) == sorted(CLASS_NAMES * 2)
    assert all(r.domain == "synthetic" for r in rows)
    for path in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()):
        assert (tmp_path / "a" / path).read_bytes() == (tmp_path / "b" / path).read_bytes()
    assert m2.read_bytes() == m1.read_bytes()


def test_generate_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        generate_dataset(0, 0, 64)


@settings(max_examples=10)
@given(st.integers(0, 2**32), st.sampled_from(CLASS_NAMES), st.integers(0, 1000))
def test_render_any_scene_in_range(seed, cls, index):
    img = render_chip(sample_scene(seed, cls, index), 64).data
    assert np.all(np.isfinite(img)) and img.min() >= 0.0 and img.max() <= 1.0


def test_class_separability():
    # each pair of class centroids is further apart than the spread of either
    # class measured along the axis joining them
    feats = {cls: np.array([hog_descriptor(panchromatic_simulate(render_chip(sample_scene(5, cls, i), 128)))
                            for i in range(100)]) for cls in CLASS_NAMES}
    cent = {c: f.mean(axis=0) for c, f in feats.items()}
    for i, a in enumerate(CLASS_NAMES):
        for b in CLASS_NAMES[i + 1:]:
            u = cent[a] - cent[b]
            dist = np.linalg.norm(u)
            u /= dist
            assert dist > (feats[a] @ u).std() and dist > (feats[b] @ u).std()


def test_scene_params_type():
    assert isinstance(sample_scene(0, "barge", 0), SceneParams)
