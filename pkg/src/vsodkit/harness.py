"""Training, evaluation, ablation, and inference entry points.

Runs are deterministic per seed: parameter init draws from the torch RNG
(seeded once at construction) and the data order from a separate numpy
generator, so two fusion modes trained with the same seed see the same batches
in the same order. Checkpoints capture model, Adam state, and both RNG
streams, so a resumed run reproduces the next step's loss bitwise.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from vsodkit.checkpoint import (
    CheckpointData,
    gather_state,
    load_checkpoint,
    restore_model,
    restore_optimizer,
    restore_rng,
    save_checkpoint,
)
from vsodkit.config import TrainConfig
from vsodkit.losses import total_loss
from vsodkit.metrics import MetricReport, evaluate_dataset
from vsodkit.model import FUSION_MODES, SaliencyModel
from vsodkit.syndata import LoadedFrame, _resize_hwc, augment, load_dataset

from PIL import Image


class TrainingDiverged(RuntimeError):
    pass


def _log(log_fn, message: str) -> None:
    if log_fn is not None:
        log_fn(message)


def _nearest_valid_size(h: int, w: int) -> tuple[int, int]:
    def snap(v: int) -> int:
        return max(32, round(v / 32) * 32)

    return snap(h), snap(w)


def _frame_arrays(frame: LoadedFrame, size: int):
    """Resize one sample to the training resolution; masks stay binary."""
    rgb, flow, mask = frame.rgb, frame.flow_image, frame.mask
    if mask.shape != (size, size):
        rgb = _resize_hwc(rgb, (size, size), "bilinear")
        flow = _resize_hwc(flow, (size, size), "bilinear")
        mask_f = _resize_hwc(mask.astype(np.float32), (size, size), "nearest")
        mask = (mask_f > 0.5).astype(np.uint8)
    return rgb, flow, mask


def _to_batch(samples) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    rgb = torch.from_numpy(np.stack([s[0] for s in samples])).permute(0, 3, 1, 2)
    flow = torch.from_numpy(np.stack([s[1] for s in samples])).permute(0, 3, 1, 2)
    mask = torch.from_numpy(np.stack([s[2] for s in samples]).astype(np.float32))[:, None]
    return rgb.contiguous(), flow.contiguous(), mask


class Trainer:
    """Owns the parameters; one Adam step at a time."""

    def __init__(self, cfg: TrainConfig):
        if cfg.train_data is None:
            raise ValueError("cfg.train_data is not set")
        frames = load_dataset(cfg.train_data)
        self.cfg = cfg
        self.samples = [_frame_arrays(f, cfg.input_size) for f in frames]
        torch.manual_seed(cfg.seed)
        self.model = SaliencyModel(cfg.encoder_config, cfg.fusion_mode)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=cfg.learning_rate)
        self.data_rng = np.random.default_rng(cfg.seed)
        self.step_count = 0

    def _draw_batch(self):
        idx = self.data_rng.integers(0, len(self.samples), size=self.cfg.batch_size)
        batch = []
        for i in idx:
            rgb, flow, mask = self.samples[int(i)]
            if self.cfg.augment:
                rgb, flow, mask = augment(rgb, flow, mask, self.data_rng)
            batch.append((rgb, flow, mask))
        return _to_batch(batch)

    def step(self) -> dict:
        self.model.train()
        rgb, flow, mask = self._draw_batch()
        out = self.model(rgb, flow)
        loss, parts = total_loss(
            out.final,
            mask,
            out.aux_maps,
            out.confidences,
            use_ssim=self.cfg.use_ssim,
            use_iou=self.cfg.use_iou,
        )
        if not torch.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite loss at step {self.step_count + 1}: "
                f"final={parts['final']} aux={parts['aux']}"
            )
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.step_count += 1
        return {
            "step": self.step_count,
            "final": parts["final"],
            "aux": parts["aux"],
            "total": parts["total"],
        }

    def save(self, path) -> None:
        save_checkpoint(
            path,
            gather_state(self.model, self.optimizer, self.cfg, self.step_count, self.data_rng),
        )

    @classmethod
    def load(cls, path) -> "Trainer":
        data = load_checkpoint(path)
        trainer = cls(data.config)
        restore_model(trainer.model, data)
        restore_optimizer(trainer.optimizer, trainer.model, data)
        trainer.data_rng = restore_rng(data)
        trainer.step_count = data.step
        return trainer


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path | None
    records: list[dict]


def train(cfg: TrainConfig, out_dir, log_fn=None) -> TrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train.log"
    final_path = out_dir / "final.ckpt"
    trainer = Trainer(cfg)
    records: list[dict] = []
    start = time.perf_counter()
    with open(log_path, "w") as log_file:

        def emit(line: str) -> None:
            log_file.write(line + "\n")
            log_file.flush()
            _log(log_fn, line)

        emit("config " + json.dumps(cfg.to_dict(), sort_keys=True))
        try:
            for _ in range(cfg.max_steps):
                rec = trainer.step()
                rec["wall"] = time.perf_counter() - start
                records.append(rec)
                if rec["step"] % cfg.log_every == 0 or rec["step"] == cfg.max_steps:
                    emit(
                        f"step {rec['step']}, L_f {rec['final']:.6f}, "
                        f"L_cag_sum {rec['aux']:.6f}, total {rec['total']:.6f}, "
                        f"wall {rec['wall']:.3f}s"
                    )
                if (
                    cfg.checkpoint_every > 0
                    and rec["step"] % cfg.checkpoint_every == 0
                    and rec["step"] != cfg.max_steps
                ):
                    trainer.save(out_dir / f"step{rec['step']:06d}.ckpt")
        except TrainingDiverged as exc:
            emit(f"aborted: {exc}")
            trainer.save(out_dir / "diverged.ckpt")
            raise
        trainer.save(final_path)
        emit(f"saved {final_path}")
    return TrainResult(checkpoint_path=final_path, log_path=log_path, records=records)


def _load_model(data: CheckpointData) -> SaliencyModel:
    model = SaliencyModel(data.config.encoder_config, data.config.fusion_mode)
    restore_model(model, data)
    model.eval()
    return model


def predict_map(model: SaliencyModel, rgb: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Saliency map for one (rgb, flow-image) pair, any resolution.

    Off-grid sizes are resized to the nearest stride-valid shape for the
    forward pass and the prediction is resized back before returning.
    """
    h, w = rgb.shape[:2]
    vh, vw = _nearest_valid_size(h, w)
    rgb_in, flow_in = rgb, flow
    if (vh, vw) != (h, w):
        rgb_in = _resize_hwc(rgb, (vh, vw), "bilinear")
        flow_in = _resize_hwc(flow, (vh, vw), "bilinear")
    rgb_t = torch.from_numpy(rgb_in).permute(2, 0, 1)[None].contiguous()
    flow_t = torch.from_numpy(flow_in).permute(2, 0, 1)[None].contiguous()
    with torch.no_grad():
        out = model(rgb_t, flow_t)
        pred = out.final
        if (vh, vw) != (h, w):
            pred = torch.nn.functional.interpolate(
                pred, size=(h, w), mode="bilinear", align_corners=False
            )
    return pred[0, 0].numpy().astype(np.float64)


def evaluate(
    checkpoint_path, data_path, out_dir=None, save_maps: bool = False, log_fn=None
) -> MetricReport:
    data = load_checkpoint(checkpoint_path)
    model = _load_model(data)
    frames = load_dataset(data_path)
    resized = sum(1 for f in frames if _nearest_valid_size(*f.mask.shape) != f.mask.shape)
    if resized:
        _log(log_fn, f"resizing {resized} frames to stride-valid shapes for the forward pass")

    predictions = [predict_map(model, f.rgb, f.flow_image) for f in frames]
    masks = [f.mask for f in frames]
    report = evaluate_dataset(predictions, masks)
    _log(
        log_fn,
        f"max_f {report.max_f_beta:.4f}, s {report.s_measure:.4f}, mae {report.mae:.4f} "
        f"({report.frame_count} frames)",
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json() + "\n")
        if save_maps:
            for frame, pred in zip(frames, predictions):
                raster = np.round(pred * 255.0).astype(np.uint8)
                name = f"{frame.sequence}_{frame.index:05d}.png"
                Image.fromarray(raster).save(out_dir / name)
    return report


_ROW_LABELS = {
    "concat": "Cat",
    "add": "Add",
    "mul": "Mul",
    "cag_only": "+CAG",
    "dde_only": "+DDE",
    "cag_dde": "Ours",
}


def ablate(
    base_cfg: TrainConfig,
    modes: list[str],
    seeds: list[int],
    out_dir,
    log_fn=None,
) -> dict:
    """Train every (mode, seed) pair on identical data order and compare.

    Emits table.txt / table.json under out_dir: one row per mode with
    mean and spread (population std over seeds) of max F, S, and MAE
    on the held-out split.
    """
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    if len(modes) < 1:
        raise ValueError("need at least one fusion mode")
    unknown = [m for m in modes if m not in FUSION_MODES]
    if unknown:
        raise ValueError(f"unknown fusion modes: {unknown}")
    if base_cfg.train_data is None or base_cfg.eval_data is None:
        raise ValueError("ablation needs both train_data and eval_data")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for mode in modes:
        per_seed = {}
        for seed in seeds:
            cfg = replace(base_cfg, fusion_mode=mode, seed=seed)
            run_dir = out_dir / f"{mode}_seed{seed}"
            _log(log_fn, f"training {mode} seed {seed}")
            result = train(cfg, run_dir, log_fn=None)
            report = evaluate(result.checkpoint_path, cfg.eval_data)
            per_seed[str(seed)] = {
                "max_f": report.max_f_beta,
                "s": report.s_measure,
                "mae": report.mae,
            }
            _log(
                log_fn,
                f"  {mode} seed {seed}: max_f {report.max_f_beta:.4f}, "
                f"mae {report.mae:.4f}",
            )
        values = {k: np.array([per_seed[str(s)][k] for s in seeds]) for k in ("max_f", "s", "mae")}
        rows.append(
            {
                "mode": mode,
                "label": _ROW_LABELS.get(mode, mode),
                "max_f_mean": float(values["max_f"].mean()),
                "max_f_std": float(values["max_f"].std()),
                "s_mean": float(values["s"].mean()),
                "s_std": float(values["s"].std()),
                "mae_mean": float(values["mae"].mean()),
                "mae_std": float(values["mae"].std()),
                "per_seed": per_seed,
            }
        )

    table = {"modes": list(modes), "seeds": list(seeds), "rows": rows}
    lines = [f"{'mode':<10}{'label':<8}{'maxF':>8}{'±':>8}{'S':>8}{'±':>8}{'MAE':>8}{'±':>8}"]
    for row in rows:
        lines.append(
            f"{row['mode']:<10}{row['label']:<8}"
            f"{row['max_f_mean']:>8.4f}{row['max_f_std']:>8.4f}"
            f"{row['s_mean']:>8.4f}{row['s_std']:>8.4f}"
            f"{row['mae_mean']:>8.4f}{row['mae_std']:>8.4f}"
        )
    text = "\n".join(lines) + "\n"
    (out_dir / "table.txt").write_text(text)
    (out_dir / "table.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    _log(log_fn, text)
    return table


def infer(checkpoint_path, rgb_dir, flow_dir, out_dir, log_fn=None) -> list[Path]:
    """Write one 8-bit grayscale saliency raster per input frame."""
    rgb_dir, flow_dir, out_dir = Path(rgb_dir), Path(flow_dir), Path(out_dir)
    rgb_files = sorted(rgb_dir.glob("*.png"))
    flow_files = sorted(flow_dir.glob("*.png"))
    if len(rgb_files) != len(flow_files):
        raise ValueError(
            f"frame count mismatch: {len(rgb_files)} rgb vs {len(flow_files)} flow"
        )
    if not rgb_files:
        raise ValueError(f"no .png frames under {rgb_dir}")
    data = load_checkpoint(checkpoint_path)
    model = _load_model(data)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for rgb_path, flow_path in zip(rgb_files, flow_files):
        rgb = np.asarray(Image.open(rgb_path)).astype(np.float32) / 255.0
        flow = np.asarray(Image.open(flow_path)).astype(np.float32) / 255.0
        pred = predict_map(model, rgb, flow)
        raster = np.round(pred * 255.0).astype(np.uint8)
        target = out_dir / rgb_path.name
        Image.fromarray(raster, mode="L").save(target)
        written.append(target)
        _log(log_fn, f"wrote {target}")
    return written
