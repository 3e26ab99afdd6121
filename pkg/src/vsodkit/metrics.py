"""Saliency evaluation metrics: max F-measure, S-measure, MAE.

Conventions follow the standard saliency evaluation toolboxes: 256 evenly
spaced binarization thresholds with strict `>` cuts, per-frame precision and
recall averaged across the frame set before the F-measure is formed, and the
structure measure's object/region split with its degenerate-mask fallbacks.
All arithmetic is float64 numpy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

BETA2 = 0.3
NUM_THRESHOLDS = 256
THRESHOLDS = np.linspace(0.0, 1.0, NUM_THRESHOLDS)


def _as_frame(x: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2D (H, W) map, got shape {arr.shape}")
    return arr


def _check_binary(gt: np.ndarray) -> np.ndarray:
    arr = _as_frame(gt, "ground truth")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("ground truth must be strictly binary {0, 1}")
    return arr


def _frames(x) -> list[np.ndarray]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return [arr]
    if arr.ndim == 3:
        return [arr[i] for i in range(arr.shape[0])]
    raise ValueError(f"expected (H, W) or (N, H, W), got shape {arr.shape}")


def precision_recall_curve(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-threshold precision and recall of one frame (float64, length 256)."""
    pred = _as_frame(pred, "prediction")
    gt = _check_binary(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    flat_p = pred.ravel()
    flat_g = gt.ravel() > 0.5
    n_gt = int(flat_g.sum())

    hits = flat_p[None, :] > THRESHOLDS[:, None]  # (256, H*W)
    n_pred = hits.sum(axis=1)
    tp = (hits & flat_g[None, :]).sum(axis=1)

    precision = np.zeros(NUM_THRESHOLDS)
    recall = np.zeros(NUM_THRESHOLDS)
    nonzero = n_pred > 0
    precision[nonzero] = tp[nonzero] / n_pred[nonzero]
    if n_gt > 0:
        recall = tp / n_gt
    return precision, recall


def f_beta(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    """F with beta^2 = 0.3; defined as 0 where precision + recall is 0."""
    num = (1.0 + BETA2) * precision * recall
    den = BETA2 * precision + recall
    out = np.zeros_like(num)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def max_f_measure(pred, gt) -> tuple[float, np.ndarray]:
    """Max F over 256 thresholds for a frame or a whole frame set.

    Precision and recall are averaged per frame across the set, then combined
    into one F value per threshold. Returns (max, per-threshold vector).
    """
    preds, gts = _frames(pred), _frames(gt)
    if len(preds) != len(gts):
        raise ValueError(f"frame count mismatch: {len(preds)} vs {len(gts)}")
    prec_sum = np.zeros(NUM_THRESHOLDS)
    rec_sum = np.zeros(NUM_THRESHOLDS)
    for p, g in zip(preds, gts):
        precision, recall = precision_recall_curve(p, g)
        prec_sum += precision
        rec_sum += recall
    per_threshold = f_beta(prec_sum / len(preds), rec_sum / len(preds))
    return float(per_threshold.max()), per_threshold


def mae(pred, gt) -> float:
    """Mean absolute error, averaged per frame then over frames."""
    preds, gts = _frames(pred), _frames(gt)
    if len(preds) != len(gts):
        raise ValueError(f"frame count mismatch: {len(preds)} vs {len(gts)}")
    total = 0.0
    for p, g in zip(preds, gts):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
        total += float(np.mean(np.abs(p - g)))
    return total / len(preds)


# --- structure measure -------------------------------------------------------
# Object-aware and region-aware terms with alpha = 0.5, including the
# all-foreground / all-background mean-based fallbacks and the round-half-up
# centroid convention of the reference definition.

_EPS = np.finfo(np.float64).eps


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    sigma = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = gt > 0.5
    o_fg = _object_score(pred[fg])
    o_bg = _object_score((1.0 - pred)[~fg])
    u = float(gt.mean())
    return u * o_fg + (1.0 - u) * o_bg


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """1-based (row, col) split point."""
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        return _round_half_up(rows / 2.0), _round_half_up(cols / 2.0)
    i = np.arange(1, cols + 1)
    j = np.arange(1, rows + 1)
    x = _round_half_up(float((gt.sum(axis=0) * i).sum() / total))
    y = _round_half_up(float((gt.sum(axis=1) * j).sum() / total))
    return y, x


def _region_similarity(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x = float(pred.mean())
    y = float(gt.mean())
    sigma_x2 = float(((pred - x) ** 2).sum() / (n - 1 + _EPS))
    sigma_y2 = float(((gt - y) ** 2).sum() / (n - 1 + _EPS))
    sigma_xy = float(((pred - x) * (gt - y)).sum() / (n - 1 + _EPS))
    alpha = 4.0 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x2 + sigma_y2)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    rows, cols = gt.shape
    y, x = _centroid(gt)
    area = rows * cols
    score = 0.0
    for rs, re, cs, ce in ((0, y, 0, x), (0, y, x, cols), (y, rows, 0, x), (y, rows, x, cols)):
        if rs >= re or cs >= ce:
            continue
        weight = (re - rs) * (ce - cs) / area
        score += weight * _region_similarity(pred[rs:re, cs:ce], gt[rs:re, cs:ce])
    return score


def s_measure(pred, gt) -> float:
    """Structure measure of a single frame (or the mean over a frame set)."""
    preds, gts = _frames(pred), _frames(gt)
    if len(preds) != len(gts):
        raise ValueError(f"frame count mismatch: {len(preds)} vs {len(gts)}")
    total = 0.0
    for p, g in zip(preds, gts):
        g = _check_binary(g)
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
        mean_gt = g.mean()
        if mean_gt == 0.0:
            score = 1.0 - float(p.mean())
        elif mean_gt == 1.0:
            score = float(p.mean())
        else:
            score = 0.5 * _s_object(p, g) + 0.5 * _s_region(p, g)
            score = max(score, 0.0)
        total += score
    return total / len(preds)


@dataclass
class MetricReport:
    max_f_beta: float
    s_measure: float
    mae: float
    per_threshold_f: list[float] = field(repr=False)
    frame_count: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_f_beta": self.max_f_beta,
                "s_measure": self.s_measure,
                "mae": self.mae,
                "frame_count": self.frame_count,
                "per_threshold_f": self.per_threshold_f,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        return cls(
            max_f_beta=data["max_f_beta"],
            s_measure=data["s_measure"],
            mae=data["mae"],
            per_threshold_f=data["per_threshold_f"],
            frame_count=data["frame_count"],
        )


def evaluate_dataset(
    predictions: Iterable[np.ndarray], ground_truths: Iterable[np.ndarray]
) -> MetricReport:
    """Aggregate per-frame statistics over paired prediction/mask streams."""
    prec_sum = np.zeros(NUM_THRESHOLDS)
    rec_sum = np.zeros(NUM_THRESHOLDS)
    s_sum = 0.0
    mae_sum = 0.0
    count = 0

    pred_it: Iterator[np.ndarray] = iter(predictions)
    gt_it: Iterator[np.ndarray] = iter(ground_truths)
    while True:
        pred = next(pred_it, None)
        gt = next(gt_it, None)
        if pred is None and gt is None:
            break
        if pred is None or gt is None:
            raise ValueError("prediction and ground-truth streams differ in length")
        p = _as_frame(pred, "prediction")
        g = _check_binary(gt)
        if p.shape != g.shape:
            raise ValueError(f"frame {count}: shape mismatch {p.shape} vs {g.shape}")
        precision, recall = precision_recall_curve(p, g)
        prec_sum += precision
        rec_sum += recall
        s_sum += s_measure(p, g)
        mae_sum += float(np.mean(np.abs(p - g)))
        count += 1

    if count == 0:
        raise ValueError("cannot evaluate an empty frame stream")
    per_threshold = f_beta(prec_sum / count, rec_sum / count)
    return MetricReport(
        max_f_beta=float(per_threshold.max()),
        s_measure=s_sum / count,
        mae=mae_sum / count,
        per_threshold_f=[float(v) for v in per_threshold],
        frame_count=count,
    )
