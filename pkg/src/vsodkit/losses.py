"""Hybrid segmentation losses and the full training objective.

The final prediction is trained with BCE + SSIM + soft-IoU; every gate's
auxiliary map adds a BCE + confidence-regression term. All losses are plain
differentiable tensor expressions, checked against finite differences in the
test suite.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

PROB_EPS = 1e-7
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_same_shape(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def bce_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy; probabilities clipped to [eps, 1-eps]."""
    _check_same_shape(pred, target)
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def gaussian_window(size: int, sigma: float, dtype: torch.dtype) -> torch.Tensor:
    """Normalized 2D Gaussian, shape (1, 1, size, size)."""
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    return (g[:, None] * g[None, :]).view(1, 1, size, size)


def ssim_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    window_size: int = 11,
    sigma: float = 1.5,
) -> torch.Tensor:
    """One minus the mean local SSIM over valid Gaussian windows.

    Windowed means/variances/covariance are Gaussian-weighted; constants use
    the standard dynamic-range-1 values. Maps must be at least as large as the
    window.
    """
    _check_same_shape(pred, target)
    h, w = pred.shape[-2:]
    if h < window_size or w < window_size:
        raise ValueError(
            f"map {h}x{w} is smaller than the {window_size}x{window_size} SSIM window"
        )
    window = gaussian_window(window_size, sigma, pred.dtype).to(pred.device)

    mu_p = F.conv2d(pred, window)
    mu_g = F.conv2d(target, window)
    var_p = F.conv2d(pred * pred, window) - mu_p * mu_p
    var_g = F.conv2d(target * target, window) - mu_g * mu_g
    cov = F.conv2d(pred * target, window) - mu_p * mu_g

    num = (2.0 * mu_p * mu_g + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_p * mu_p + mu_g * mu_g + SSIM_C1) * (var_p + var_g + SSIM_C2)
    return 1.0 - (num / den).mean()


def iou_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Soft IoU loss over the union, averaged over the batch.

    An empty union (both maps identically zero) counts as a perfect match,
    mirroring the convention of the confidence target.
    """
    _check_same_shape(pred, target)
    dims = tuple(range(1, pred.dim()))
    inter = (pred * target).sum(dim=dims)
    union = (pred + target - pred * target).sum(dim=dims)
    per_sample = 1.0 - inter / (union + PROB_EPS)
    per_sample = torch.where(union > 0, per_sample, torch.zeros_like(per_sample))
    return per_sample.mean()


def iou_loss_printed(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Diagnostic-only variant with a TN + TP + FP denominator.

    Resolution-dependent (background pixels inflate the denominator); exposed
    for comparison, never used in training.
    """
    _check_same_shape(pred, target)
    dims = tuple(range(1, pred.dim()))
    tp = (pred * target).sum(dim=dims)
    fp = (pred * (1.0 - target)).sum(dim=dims)
    tn = ((1.0 - pred) * (1.0 - target)).sum(dim=dims)
    return (1.0 - tp / (tn + tp + fp + PROB_EPS)).mean()


def final_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    use_ssim: bool = True,
    use_iou: bool = True,
) -> torch.Tensor:
    """BCE + SSIM + IoU on the final saliency map."""
    loss = bce_loss(pred, target)
    if use_ssim:
        loss = loss + ssim_loss(pred, target)
    if use_iou:
        loss = loss + iou_loss(pred, target)
    return loss


def downsample_mask(mask: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Area-average the full-resolution mask to a level's resolution."""
    if mask.shape[-2:] == tuple(size):
        return mask
    return F.adaptive_avg_pool2d(mask, size)


def total_loss(
    pred_final: torch.Tensor,
    mask: torch.Tensor,
    aux_maps: dict[str, list[torch.Tensor]] | None = None,
    confidences: dict[str, list[torch.Tensor]] | None = None,
    use_ssim: bool = True,
    use_iou: bool = True,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Final-map loss plus one gate loss per stream per level.

    Returns the scalar total and a float breakdown for logging. With no
    auxiliary outputs (gate-free fusion modes) the total equals the final-map
    loss exactly.
    """
    from vsodkit.gating import gate_loss  # local import to avoid a cycle

    aux_maps = aux_maps or {}
    confidences = confidences or {}
    if set(aux_maps) != set(confidences):
        raise ValueError("aux_maps and confidences must cover the same streams")

    loss_f = final_loss(pred_final, mask, use_ssim=use_ssim, use_iou=use_iou)
    total = loss_f
    aux_sum = pred_final.new_zeros(())
    n_terms = 0
    for stream, maps in aux_maps.items():
        confs = confidences[stream]
        if len(maps) != 5 or len(confs) != 5:
            raise ValueError(
                f"stream '{stream}' must carry 5 auxiliary maps and confidences,"
                f" got {len(maps)} and {len(confs)}"
            )
        for pred_map, conf in zip(maps, confs):
            level_mask = downsample_mask(mask, pred_map.shape[-2:])
            aux_sum = aux_sum + gate_loss(pred_map, conf, level_mask)
            n_terms += 1
    total = total + aux_sum
    parts = {
        "final": float(loss_f.detach()),
        "aux": float(aux_sum.detach()),
        "total": float(total.detach()),
        "aux_terms": float(n_terms),
    }
    return total, parts
