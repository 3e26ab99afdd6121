import numpy as np
import pytest

from vsodkit.syndata import (
    AUGMENT_SCALES,
    DatasetError,
    MovingShape,
    SceneConfig,
    augment,
    build_dataset,
    challenge_configs,
    flip_flow_field,
    generate_sequence,
    load_dataset,
    render_flow_color,
    write_dataset,
)


def test_scene_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(num_objects=0)
    with pytest.raises(ValueError):
        SceneConfig(num_frames=0)
    with pytest.raises(ValueError):
        SceneConfig(object_kinds=("disk", "blob"))
    with pytest.raises(ValueError):
        SceneConfig(contrast=1.5)


def test_generation_is_deterministic():
    cfg = SceneConfig(num_frames=4, num_distractors=1, object_kinds=("disk", "rectangle", "polygon"))
    a = generate_sequence(cfg, seed=11)
    b = generate_sequence(cfg, seed=11)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.rgb, fb.rgb)
        assert np.array_equal(fa.flow, fb.flow)
        assert np.array_equal(fa.mask, fb.mask)
    c = generate_sequence(cfg, seed=12)
    assert not np.array_equal(a[0].mask, c[0].mask)


def test_frames_have_expected_layout_and_ranges():
    frames = generate_sequence(SceneConfig(resolution=(48, 64), num_frames=3), seed=0)
    assert len(frames) == 3
    for f in frames:
        assert f.rgb.shape == (48, 64, 3) and f.rgb.dtype == np.float32
        assert f.flow.shape == (2, 48, 64)
        assert f.mask.shape == (48, 64) and set(np.unique(f.mask)) <= {0, 1}
        assert f.rgb.min() >= 0.0 and f.rgb.max() <= 1.0
        assert f.mask.sum() > 0  # salient object always visible


def test_known_velocity_disk_has_exact_flow():
    disk = MovingShape(
        kind="disk", size=8.0, position=(28.0, 30.0), velocity=(2.0, -1.0), color=(0.9, 0.2, 0.1)
    )
    frames = generate_sequence(SceneConfig(num_frames=3), seed=0, objects=[disk])
    inside = frames[0].mask.astype(bool)
    assert inside.sum() > 100
    assert np.all(frames[0].flow[0][inside] == np.float32(2.0))
    assert np.all(frames[0].flow[1][inside] == np.float32(-1.0))
    assert np.all(frames[0].flow[0][~inside] == 0.0)
    assert np.all(frames[0].flow[1][~inside] == 0.0)


def test_static_scene_has_zero_flow():
    frames = generate_sequence(SceneConfig(velocity_range=(0.0, 0.0)), seed=1)
    for f in frames:
        assert np.all(f.flow == 0.0)


def test_camera_velocity_moves_background():
    cfg = SceneConfig(velocity_range=(0.0, 0.0), camera_velocity=(1.5, -0.5))
    frames = generate_sequence(cfg, seed=2)
    outside = ~frames[0].mask.astype(bool)
    assert np.all(frames[0].flow[0][outside] == np.float32(1.5))
    assert np.all(frames[0].flow[1][outside] == np.float32(-0.5))
    # the background pattern actually translates between frames
    assert not np.array_equal(frames[0].rgb, frames[1].rgb)


def test_flow_magnitude_bounded_by_scene_limits():
    cfg = SceneConfig(velocity_range=(1.0, 3.0), num_frames=5)
    frames = generate_sequence(cfg, seed=3)
    for f in frames:
        mag = np.hypot(f.flow[0], f.flow[1])
        assert mag.max() <= 3.0 * np.sqrt(2.0) + 1e-5


def test_object_stays_inside_frame_with_reflection():
    cfg = SceneConfig(velocity_range=(6.0, 8.0), num_frames=12)
    frames = generate_sequence(cfg, seed=4)
    for f in frames:
        assert f.mask.sum() > 0
        border = np.concatenate([f.mask[0], f.mask[-1], f.mask[:, 0], f.mask[:, -1]])
        assert border.sum() == 0  # objects never touch the border


def test_solid_fill_warp_consistency():
    """A pixel well inside the object keeps its color when followed along the
    exact flow, because fills are solid."""
    disk = MovingShape(
        kind="rectangle", size=9.0, position=(30.0, 26.0), velocity=(3.0, 2.0), color=(0.1, 0.8, 0.3)
    )
    frames = generate_sequence(SceneConfig(num_frames=4), seed=0, objects=[disk])
    for t in range(3):
        cur, nxt = frames[t], frames[t + 1]
        inside = cur.mask.astype(bool)
        # erode so the displaced sample stays interior
        core = inside.copy()
        for _ in range(4):
            core[1:-1, 1:-1] &= (
                core[:-2, 1:-1] & core[2:, 1:-1] & core[1:-1, :-2] & core[1:-1, 2:]
            )
            core[0] = core[-1] = False
            core[:, 0] = core[:, -1] = False
        ys, xs = np.nonzero(core)
        assert len(ys) > 10
        dx = cur.flow[0][ys, xs]
        dy = cur.flow[1][ys, xs]
        moved = nxt.rgb[
            np.round(ys + dy).astype(int), np.round(xs + dx).astype(int)
        ]
        assert np.abs(moved - cur.rgb[ys, xs]).max() <= 1e-6


def test_polygon_objects_render():
    cfg = SceneConfig(object_kinds=("polygon",), num_frames=2)
    frames = generate_sequence(cfg, seed=5)
    assert frames[0].mask.sum() > 20


def test_low_contrast_reduces_separation():
    lo = generate_sequence(SceneConfig(contrast=0.02), seed=6)[0]
    hi = generate_sequence(SceneConfig(contrast=1.0), seed=6)[0]

    def separation(frame):
        fg = frame.mask.astype(bool)
        return np.abs(frame.rgb[fg].mean(axis=0) - frame.rgb[~fg].mean(axis=0)).max()

    assert separation(lo) < separation(hi)


# --- flow rendering ----------------------------------------------------------


def test_render_zero_flow_is_white():
    img = render_flow_color(np.zeros((2, 8, 8)))
    assert np.allclose(img, 1.0)


def test_render_direction_to_hue_mapping():
    flow = np.zeros((2, 4, 4))
    flow[0] = 2.0  # pure +x at full magnitude
    img = render_flow_color(flow, max_magnitude=2.0)
    assert np.allclose(img[0, 0], [1.0, 0.0, 0.0], atol=1e-6)  # hue 0 = red
    flow[0] = -2.0
    img = render_flow_color(flow, max_magnitude=2.0)
    assert np.allclose(img[0, 0], [0.0, 1.0, 1.0], atol=1e-6)  # opposite = cyan


def test_render_magnitude_to_saturation():
    flow = np.zeros((2, 2, 2))
    flow[0, 0, 0] = 1.0
    flow[0, 1, 1] = 4.0
    img = render_flow_color(flow, max_magnitude=4.0)
    # quarter-magnitude pixel is much closer to white
    assert img[0, 0].min() == pytest.approx(0.75, abs=1e-6)
    assert img[1, 1].min() == pytest.approx(0.0, abs=1e-6)


def test_render_rejects_bad_input():
    with pytest.raises(ValueError, match="shape"):
        render_flow_color(np.zeros((3, 8, 8)))
    bad = np.zeros((2, 4, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        render_flow_color(bad)


def test_flip_flow_field_is_involution():
    rng = np.random.default_rng(7)
    flow = rng.normal(size=(2, 6, 8))
    flipped = flip_flow_field(flow)
    assert np.array_equal(flip_flow_field(flipped), flow)
    assert np.array_equal(flipped[0], -flow[0][:, ::-1])
    assert np.array_equal(flipped[1], flow[1][:, ::-1])


# --- augmentation ------------------------------------------------------------


def test_augment_preserves_shape_and_binary_mask():
    frames = generate_sequence(SceneConfig(num_frames=2), seed=8)
    f = frames[0]
    flow_img = render_flow_color(f.flow)
    for seed in range(12):
        rng = np.random.default_rng(seed)
        rgb, flow, mask = augment(f.rgb, flow_img, f.mask, rng)
        assert rgb.shape == f.rgb.shape
        assert flow.shape == flow_img.shape
        assert mask.shape == f.mask.shape
        assert set(np.unique(mask)) <= {0, 1}
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0


def test_augment_deterministic_per_rng_state():
    frames = generate_sequence(SceneConfig(num_frames=1), seed=9)
    f = frames[0]
    flow_img = render_flow_color(f.flow)
    a = augment(f.rgb, flow_img, f.mask, np.random.default_rng(3))
    b = augment(f.rgb, flow_img, f.mask, np.random.default_rng(3))
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_augment_scale_set():
    assert AUGMENT_SCALES == (0.75, 1.0, 1.25)


# --- disk layout -------------------------------------------------------------


def test_write_load_roundtrip(tmp_path):
    frames = generate_sequence(SceneConfig(num_frames=3), seed=10)
    write_dataset(tmp_path, {"alpha": frames, "beta": frames[:2]})
    loaded = load_dataset(tmp_path)
    assert [(f.sequence, f.index) for f in loaded] == [
        ("alpha", 0), ("alpha", 1), ("alpha", 2), ("beta", 0), ("beta", 1),
    ]
    for got, src in zip(loaded[:3], frames):
        assert np.array_equal(got.mask, src.mask)
        assert np.abs(got.rgb - src.rgb).max() <= 1.0 / 255 + 1e-6
        assert got.flow_image.shape == src.rgb.shape


def test_load_missing_component_names_sequence_and_frame(tmp_path):
    frames = generate_sequence(SceneConfig(num_frames=2), seed=11)
    write_dataset(tmp_path, {"seq_a": frames})
    (tmp_path / "seq_a" / "flow" / "00001.png").unlink()
    with pytest.raises(DatasetError, match=r"seq_a.*00001\.png.*flow"):
        load_dataset(tmp_path)


def test_load_empty_or_missing_root(tmp_path):
    with pytest.raises(DatasetError, match="no sequences"):
        load_dataset(tmp_path)
    with pytest.raises(DatasetError, match="does not exist"):
        load_dataset(tmp_path / "nope")


def test_build_dataset_corruption_fraction(tmp_path):
    cfg = SceneConfig(num_frames=2)
    corrupted = build_dataset(tmp_path, num_sequences=4, cfg=cfg, seed=1, corrupt_fraction=0.5)
    assert len(corrupted) == 2
    loaded = load_dataset(tmp_path)
    by_seq = {}
    for f in loaded:
        by_seq.setdefault(f.sequence, []).append(f)
    # clean renderings are mostly white (static background has zero flow);
    # noise-corrupted ones lose the white background to the additive field
    for name, seq_frames in by_seq.items():
        img = seq_frames[0].flow_image
        near_white = np.mean(np.all(img > 0.9, axis=-1))
        if name in corrupted:
            assert near_white < 0.4
        else:
            assert near_white > 0.6


def test_build_dataset_noise_varies_between_frames(tmp_path):
    corrupted = build_dataset(
        tmp_path, num_sequences=1, cfg=SceneConfig(num_frames=3), seed=3,
        corrupt_fraction=1.0,
    )
    assert corrupted == ["seq0000"]
    frames = load_dataset(tmp_path)
    assert np.abs(frames[0].flow_image - frames[1].flow_image).mean() > 0.05


def test_build_dataset_zero_mode(tmp_path):
    corrupted = build_dataset(
        tmp_path, num_sequences=2, cfg=SceneConfig(num_frames=1), seed=2,
        corrupt_fraction=1.0, corrupt_mode="zero",
    )
    assert len(corrupted) == 2
    for f in load_dataset(tmp_path):
        assert np.all(f.flow_image == 0.0)


def test_build_dataset_rejects_bad_mode(tmp_path):
    with pytest.raises(ValueError, match="corrupt_mode"):
        build_dataset(tmp_path, 1, SceneConfig(), corrupt_mode="blur")


def test_challenge_presets():
    presets = challenge_configs()
    assert set(presets) == {"low_contrast", "fast_motion", "multi_object"}
    assert presets["low_contrast"].contrast <= 0.1
    assert presets["fast_motion"].velocity_range[0] >= 10.0
    assert presets["multi_object"].num_distractors >= 2
