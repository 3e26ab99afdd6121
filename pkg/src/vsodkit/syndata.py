"""Synthetic moving-shape videos with exact ground-truth flow.

Sequences are rendered procedurally: a smooth sinusoid background (optionally
translating to mimic camera motion) and solid-colored shapes translating with
border reflection. Because every pixel's motion is analytic, the flow field is
exact, and the rendered flow image stands in for an estimated one. Scene knobs
cover the hard cases for saliency: low foreground contrast, fast motion, and
multiple moving objects of which only some are labeled salient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib.colors import hsv_to_rgb
from PIL import Image

OBJECT_KINDS = ("disk", "rectangle", "polygon")


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    resolution: tuple[int, int] = (64, 64)  # (H, W)
    num_objects: int = 1
    object_kinds: tuple[str, ...] = ("disk", "rectangle")
    velocity_range: tuple[float, float] = (1.0, 3.0)
    size_range: tuple[float, float] = (0.14, 0.20)  # fraction of min(H, W)
    background_seed: int = 0
    num_distractors: int = 0
    distractor_motion: bool = True
    contrast: float = 0.8
    num_frames: int = 6
    camera_velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.num_objects < 1:
            raise ValueError("num_objects must be >= 1")
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        unknown = set(self.object_kinds) - set(OBJECT_KINDS)
        if unknown:
            raise ValueError(f"unknown object kinds: {sorted(unknown)}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError("contrast must be in [0, 1]")


@dataclass
class MovingShape:
    """A rigidly translating solid shape."""

    kind: str
    size: float  # radius or half-extent scale, pixels
    position: tuple[float, float]  # (x, y) center at frame 0
    velocity: tuple[float, float]  # (dx, dy) pixels/frame
    color: tuple[float, float, float]
    salient: bool = True
    vertices: np.ndarray | None = None  # polygon offsets from center, (k, 2)

    @property
    def extent(self) -> float:
        return self.size


@dataclass
class Frame:
    rgb: np.ndarray  # (H, W, 3) float32 in [0, 1]
    flow: np.ndarray  # (2, H, W) float32, (dx, dy) pixels/frame
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    flow_image: np.ndarray | None = None  # optional pre-rendered (H, W, 3)


def _background_params(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "base": rng.uniform(0.35, 0.65, size=3),
        "freq": rng.uniform(0.01, 0.06, size=(3, 2)),
        "phase": rng.uniform(0.0, 2.0 * math.pi, size=(3, 3)),
        "amp": rng.uniform(0.01, 0.035, size=(3, 3)),
    }


def _render_background(
    params: dict, shape: tuple[int, int], shift: tuple[float, float]
) -> np.ndarray:
    h, w = shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    u = xs - shift[0]
    v = ys - shift[1]
    img = np.tile(params["base"], (h, w, 1))
    for k in range(3):
        fx, fy = params["freq"][k]
        carrier = 2.0 * math.pi * (fx * u + fy * v)
        wave = np.sin(carrier[..., None] + params["phase"][k][None, None, :])
        img += params["amp"][k][None, None, :] * wave
    return np.clip(img, 0.0, 1.0)


def _points_in_triangle(xs, ys, a, b, c) -> np.ndarray:
    def cross(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    d1 = cross(a[0], a[1], b[0], b[1], xs, ys)
    d2 = cross(b[0], b[1], c[0], c[1], xs, ys)
    d3 = cross(c[0], c[1], a[0], a[1], xs, ys)
    has_neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    has_pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(has_neg & has_pos)


def _shape_mask(shape: MovingShape, center: tuple[float, float], grid) -> np.ndarray:
    xs, ys = grid
    cx, cy = center
    if shape.kind == "disk":
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= shape.size**2
    if shape.kind == "rectangle":
        return (np.abs(xs - cx) <= shape.size) & (np.abs(ys - cy) <= 0.75 * shape.size)
    # star-shaped polygon: union of center-fan triangles
    verts = shape.vertices + np.array([cx, cy])
    inside = np.zeros_like(xs, dtype=bool)
    k = len(verts)
    for i in range(k):
        inside |= _points_in_triangle(xs, ys, (cx, cy), verts[i], verts[(i + 1) % k])
    return inside


def _polygon_vertices(rng: np.random.Generator, size: float) -> np.ndarray:
    k = int(rng.integers(5, 8))
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, size=k))
    radii = rng.uniform(0.6, 1.0, size=k) * size
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def _sample_shape(cfg: SceneConfig, rng: np.random.Generator, salient: bool) -> MovingShape:
    h, w = cfg.resolution
    kind = str(rng.choice(list(cfg.object_kinds)))
    size = float(rng.uniform(*cfg.size_range) * min(h, w))
    margin = size + 1.0
    if 2.0 * margin >= min(h, w):
        raise ValueError(f"object of extent {size:.1f}px does not fit in {h}x{w} frame")
    pos = (
        float(rng.uniform(margin, w - 1 - margin)),
        float(rng.uniform(margin, h - 1 - margin)),
    )
    speed = float(rng.uniform(*cfg.velocity_range))
    if salient or cfg.distractor_motion:
        angle = float(rng.uniform(0.0, 2.0 * math.pi))
        vel = (speed * math.cos(angle), speed * math.sin(angle))
    else:
        vel = (0.0, 0.0)
    base = _background_params(cfg.background_seed)["base"]
    direction = rng.choice([-1.0, 1.0], size=3) * rng.uniform(0.5, 1.0, size=3)
    color = np.clip(base + (0.08 + 0.6 * cfg.contrast) * direction, 0.0, 1.0)
    vertices = _polygon_vertices(rng, size) if kind == "polygon" else None
    return MovingShape(
        kind=kind,
        size=size,
        position=pos,
        velocity=vel,
        color=tuple(float(c) for c in color),
        salient=salient,
        vertices=vertices,
    )


def _bounce(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    pos += vel
    while pos < lo or pos > hi:
        if pos < lo:
            pos = 2.0 * lo - pos
        else:
            pos = 2.0 * hi - pos
        vel = -vel
    return pos, vel


def _trajectory(
    shape: MovingShape, cfg: SceneConfig, n_steps: int
) -> list[tuple[float, float]]:
    h, w = cfg.resolution
    margin = shape.extent + 1.0
    lo_x, hi_x = margin, w - 1 - margin
    lo_y, hi_y = margin, h - 1 - margin
    x, y = shape.position
    vx, vy = shape.velocity
    positions = [(x, y)]
    for _ in range(n_steps):
        x, vx = _bounce(x, vx, lo_x, hi_x)
        y, vy = _bounce(y, vy, lo_y, hi_y)
        positions.append((x, y))
    return positions


def generate_sequence(
    cfg: SceneConfig, seed: int, objects: list[MovingShape] | None = None
) -> list[Frame]:
    """Deterministic sequence of (rgb, exact flow, salient mask) frames.

    Distractors are drawn first so salient shapes stay fully visible; the mask
    marks exactly the salient pixels. Flow at frame t is the exact displacement
    of each pixel between frames t and t+1.
    """
    rng = np.random.default_rng(seed)
    if objects is None:
        objects = [_sample_shape(cfg, rng, salient=False) for _ in range(cfg.num_distractors)]
        objects += [_sample_shape(cfg, rng, salient=True) for _ in range(cfg.num_objects)]
    else:
        objects = list(objects)

    h, w = cfg.resolution
    grid = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    bg_params = _background_params(cfg.background_seed)
    trajectories = [_trajectory(obj, cfg, cfg.num_frames) for obj in objects]

    frames = []
    for t in range(cfg.num_frames):
        cam_shift = (cfg.camera_velocity[0] * t, cfg.camera_velocity[1] * t)
        rgb = _render_background(bg_params, (h, w), cam_shift)
        flow = np.empty((2, h, w), dtype=np.float64)
        flow[0] = cfg.camera_velocity[0]
        flow[1] = cfg.camera_velocity[1]
        mask = np.zeros((h, w), dtype=np.uint8)
        for obj, traj in zip(objects, trajectories):
            region = _shape_mask(obj, traj[t], grid)
            rgb[region] = obj.color
            disp = (traj[t + 1][0] - traj[t][0], traj[t + 1][1] - traj[t][1])
            flow[0][region] = disp[0]
            flow[1][region] = disp[1]
            mask[region] = 1 if obj.salient else 0
        frames.append(
            Frame(
                rgb=rgb.astype(np.float32),
                flow=flow.astype(np.float32),
                mask=mask,
            )
        )
    return frames


def render_flow_color(flow: np.ndarray, max_magnitude: float | None = None) -> np.ndarray:
    """Color-wheel rendering: hue from direction, saturation from magnitude.

    Zero flow renders white. Magnitudes are normalized by ``max_magnitude``
    (typically the sequence-wide maximum) or by the field's own maximum.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"flow must have shape (2, H, W), got {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise ValueError("flow field contains non-finite values")
    magnitude = np.hypot(flow[0], flow[1])
    scale = float(max_magnitude) if max_magnitude is not None else float(magnitude.max())
    if scale <= 0.0:
        scale = 1.0
    hue = (np.arctan2(flow[1], flow[0]) / (2.0 * math.pi)) % 1.0
    sat = np.clip(magnitude / scale, 0.0, 1.0)
    hsv = np.stack([hue, sat, np.ones_like(hue)], axis=-1)
    return hsv_to_rgb(hsv).astype(np.float32)


def flip_flow_field(flow: np.ndarray) -> np.ndarray:
    """Horizontal flip of a raw field: mirror columns, negate dx."""
    flipped = flow[:, :, ::-1].copy()
    flipped[0] = -flipped[0]
    return flipped


AUGMENT_SCALES = (0.75, 1.0, 1.25)


def _resize_hwc(img: np.ndarray, size: tuple[int, int], mode: str) -> np.ndarray:
    tensor = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float32))
    tensor = tensor.permute(2, 0, 1)[None] if img.ndim == 3 else tensor[None, None]
    kwargs = {"align_corners": False} if mode == "bilinear" else {}
    out = F.interpolate(tensor, size=size, mode=mode, **kwargs)
    out = out[0].permute(1, 2, 0) if img.ndim == 3 else out[0, 0]
    return out.numpy()


def _fit_to(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Center-crop or zero-pad the first two axes to the target size."""
    h, w = img.shape[:2]
    th, tw = target
    if h > th:
        top = (h - th) // 2
        img = img[top : top + th]
    if w > tw:
        left = (w - tw) // 2
        img = img[:, left : left + tw]
    h, w = img.shape[:2]
    if h < th or w < tw:
        pad_top = (th - h) // 2
        pad_left = (tw - w) // 2
        padded = np.zeros((th, tw) + img.shape[2:], dtype=img.dtype)
        padded[pad_top : pad_top + h, pad_left : pad_left + w] = img
        img = padded
    return img


def augment(
    rgb: np.ndarray,
    flow_image: np.ndarray,
    mask: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint random horizontal flip and {0.75, 1, 1.25} rescale.

    Rescaled frames are cropped or zero-padded back to the original size, so
    every output keeps the network-friendly resolution; masks stay binary.
    """
    flip = bool(rng.random() < 0.5)
    scale = float(rng.choice(AUGMENT_SCALES))
    if flip:
        rgb = rgb[:, ::-1].copy()
        flow_image = flow_image[:, ::-1].copy()
        mask = mask[:, ::-1].copy()
    if scale != 1.0:
        h, w = mask.shape
        nh, nw = round(h * scale), round(w * scale)
        rgb = _fit_to(_resize_hwc(rgb, (nh, nw), "bilinear"), (h, w))
        flow_image = _fit_to(_resize_hwc(flow_image, (nh, nw), "bilinear"), (h, w))
        mask_f = _fit_to(_resize_hwc(mask.astype(np.float32), (nh, nw), "nearest"), (h, w))
        mask = (mask_f > 0.5).astype(mask.dtype)
        rgb = np.clip(rgb, 0.0, 1.0)
        flow_image = np.clip(flow_image, 0.0, 1.0)
    return rgb, flow_image, mask


# --- disk layout -------------------------------------------------------------
# <root>/<sequence>/{rgb,flow,mask}/%05d.png, 8-bit, lexicographic load order.


@dataclass
class LoadedFrame:
    sequence: str
    index: int
    rgb: np.ndarray  # (H, W, 3) float32
    flow_image: np.ndarray  # (H, W, 3) float32
    mask: np.ndarray  # (H, W) uint8 {0, 1}


def _save_png(path: Path, array: np.ndarray) -> None:
    Image.fromarray(array).save(path)


def write_dataset(root, sequences) -> None:
    """Write sequences as 8-bit rasters. ``sequences`` maps name -> frames, or
    is a plain list (auto-named seq0000, seq0001, ...)."""
    root = Path(root)
    if not isinstance(sequences, dict):
        sequences = {f"seq{i:04d}": frames for i, frames in enumerate(sequences)}
    for name, frames in sequences.items():
        seq_dir = root / name
        for sub in ("rgb", "flow", "mask"):
            (seq_dir / sub).mkdir(parents=True, exist_ok=True)
        seq_max = max(
            (float(np.hypot(f.flow[0], f.flow[1]).max()) for f in frames), default=0.0
        )
        for i, frame in enumerate(frames):
            stem = f"{i:05d}.png"
            flow_img = frame.flow_image
            if flow_img is None:
                flow_img = render_flow_color(frame.flow, max_magnitude=seq_max)
            _save_png(seq_dir / "rgb" / stem, np.round(frame.rgb * 255).astype(np.uint8))
            _save_png(seq_dir / "flow" / stem, np.round(flow_img * 255).astype(np.uint8))
            _save_png(seq_dir / "mask" / stem, (frame.mask * 255).astype(np.uint8))


def load_dataset(root) -> list[LoadedFrame]:
    """Load every frame under root, lexicographic by (sequence, filename)."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    seq_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    frames: list[LoadedFrame] = []
    for seq_dir in seq_dirs:
        rgb_dir = seq_dir / "rgb"
        if not rgb_dir.is_dir():
            continue
        names = sorted(p.name for p in rgb_dir.glob("*.png"))
        for idx, name in enumerate(names):
            sample = {}
            for sub in ("rgb", "flow", "mask"):
                path = seq_dir / sub / name
                if not path.is_file():
                    raise DatasetError(
                        f"sequence '{seq_dir.name}' frame '{name}': missing {sub} file"
                    )
                try:
                    sample[sub] = np.asarray(Image.open(path))
                except Exception as exc:
                    raise DatasetError(
                        f"sequence '{seq_dir.name}' frame '{name}': corrupt {sub} file ({exc})"
                    ) from exc
            frames.append(
                LoadedFrame(
                    sequence=seq_dir.name,
                    index=idx,
                    rgb=sample["rgb"].astype(np.float32) / 255.0,
                    flow_image=sample["flow"].astype(np.float32) / 255.0,
                    mask=(sample["mask"] >= 128).astype(np.uint8),
                )
            )
    if not frames:
        raise DatasetError(f"dataset root {root} contains no sequences")
    return frames


def build_dataset(
    root,
    num_sequences: int,
    cfg: SceneConfig,
    seed: int = 0,
    corrupt_fraction: float = 0.0,
    corrupt_mode: str = "noise",
) -> list[str]:
    """Generate and write a split; optionally corrupt the flow renderings of a
    deterministic fraction of sequences (noise or zeroing), emulating an
    unreliable temporal cue. Returns the corrupted sequence names."""
    if corrupt_mode not in ("noise", "zero"):
        raise ValueError("corrupt_mode must be 'noise' or 'zero'")
    rng = np.random.default_rng(seed)
    n_corrupt = round(corrupt_fraction * num_sequences)
    corrupt_ids = set(rng.permutation(num_sequences)[:n_corrupt].tolist())
    sequences = {}
    corrupted = []
    for i in range(num_sequences):
        name = f"seq{i:04d}"
        frames = generate_sequence(cfg, seed=seed * 100003 + i)
        if i in corrupt_ids:
            corrupted.append(name)
            frame_rng = np.random.default_rng(seed * 77003 + i)
            if corrupt_mode == "zero":
                for frame in frames:
                    frame.flow_image = np.zeros(frame.rgb.shape, dtype=np.float32)
            else:
                # full-amplitude additive blob noise: a fresh low-resolution
                # uniform field per frame, upsampled with a per-sequence
                # smoothness. Locally the result looks like a legitimate flow
                # fill; globally the white zero-flow background is gone.
                h, w = frames[0].rgb.shape[:2]
                cell = int(frame_rng.choice([2, 4, 8]))
                seq_max = max(
                    float(np.hypot(f.flow[0], f.flow[1]).max()) for f in frames
                )
                for frame in frames:
                    base = render_flow_color(frame.flow, max_magnitude=seq_max)
                    low = frame_rng.random(
                        (max(1, h // cell), max(1, w // cell), 3)
                    ).astype(np.float32)
                    field = _resize_hwc(low, (h, w), "bilinear")
                    frame.flow_image = np.clip(base + 2.0 * field - 1.0, 0.0, 1.0)
        sequences[name] = frames
    write_dataset(root, sequences)
    return corrupted


def challenge_configs(resolution: tuple[int, int] = (64, 64)) -> dict[str, SceneConfig]:
    """Scene setups reproducing the classic failure modes."""
    base = SceneConfig(resolution=resolution)
    return {
        "low_contrast": replace(base, contrast=0.05, velocity_range=(1.0, 2.0)),
        "fast_motion": replace(base, velocity_range=(11.0, 14.0)),
        "multi_object": replace(
            base, num_distractors=2, distractor_motion=True, velocity_range=(1.0, 2.5)
        ),
    }
