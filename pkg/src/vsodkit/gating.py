"""Confidence-guided adaptive gating of one feature stream.

Each pyramid level of each stream gets its own gate: a small segmentation head
predicts an auxiliary saliency map, a confidence head pools the map together
with the features into one scalar per sample, and the features are rescaled by
that scalar. The confidence is supervised toward the IoU between the auxiliary
map and the (downsampled) ground truth, so unreliable streams learn to fade.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from vsodkit.encoder import init_conv
from vsodkit.losses import bce_loss


def gate_features(features: torch.Tensor, confidence: torch.Tensor) -> torch.Tensor:
    """Scale each sample's feature map by its scalar confidence."""
    if features.shape[0] != confidence.shape[0]:
        raise ValueError(
            f"batch mismatch: features {features.shape[0]} vs confidence {confidence.shape[0]}"
        )
    return features * confidence.view(-1, 1, 1, 1)


def iou_target(pred_map: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Per-sample IoU of the binarized prediction against the binarized mask.

    Both maps are cut at 0.5. Empty-vs-empty counts as a perfect 1.0. The
    result is detached: it is a regression target, not a gradient path.
    """
    if pred_map.shape != mask.shape:
        raise ValueError(f"shape mismatch: {tuple(pred_map.shape)} vs {tuple(mask.shape)}")
    with torch.no_grad():
        p = pred_map > 0.5
        g = mask > 0.5
        dims = tuple(range(1, pred_map.dim()))
        inter = (p & g).sum(dim=dims).to(pred_map.dtype)
        union = (p | g).sum(dim=dims).to(pred_map.dtype)
        out = torch.ones_like(inter)
        nonempty = union > 0
        out[nonempty] = inter[nonempty] / union[nonempty]
    return out


def gate_loss(
    pred_map: torch.Tensor, confidence: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    """Deep-supervision loss of one gate: BCE on the auxiliary map plus L1
    regression of the confidence toward the (constant) IoU target."""
    target = iou_target(pred_map, mask)
    return bce_loss(pred_map, mask) + (confidence - target).abs().mean()


class ConfidenceGate(nn.Module):
    """Auxiliary prediction, confidence estimate, and multiplicative gate."""

    def __init__(self, channels: int):
        super().__init__()
        mid = max(channels // 2, 4)
        quarter = max(channels // 4, 4)
        self.seg = nn.Sequential(
            init_conv(nn.Conv2d(channels, mid, 3, padding=1)),
            nn.ReLU(),
            init_conv(nn.Conv2d(mid, quarter, 3, padding=1)),
            nn.ReLU(),
            init_conv(nn.Conv2d(quarter, 1, 3, padding=1)),
            nn.Sigmoid(),
        )
        self.conf = nn.Sequential(
            init_conv(nn.Conv2d(channels + 1, mid, 3, padding=1)),
            nn.ReLU(),
            init_conv(nn.Conv2d(mid, quarter, 3, padding=1)),
            nn.ReLU(),
            init_conv(nn.Conv2d(quarter, quarter, 3, padding=1)),
            nn.ReLU(),
        )
        self.conf_proj = init_conv(nn.Conv2d(quarter, 1, 1))
        # open-gate start: confidences begin near 0.9 so gating does not
        # starve the fusion path before the auxiliary heads are informative
        nn.init.constant_(self.conf_proj.bias, 2.0)

    def segment(self, features: torch.Tensor) -> torch.Tensor:
        """Predict the auxiliary saliency map at the feature resolution."""
        return self.seg(features)

    def predict_confidence(
        self, features: torch.Tensor, pred_map: torch.Tensor
    ) -> torch.Tensor:
        """One scalar in (0, 1) per sample from the map and the features."""
        if features.shape[2:] != pred_map.shape[2:]:
            raise ValueError(
                f"spatial mismatch: features {tuple(features.shape[2:])}"
                f" vs map {tuple(pred_map.shape[2:])}"
            )
        pooled = self.conf(torch.cat([pred_map, features], dim=1))
        pooled = pooled.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.conf_proj(pooled)).view(-1)

    def forward(
        self, features: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (gated features, auxiliary map, confidence)."""
        pred_map = self.segment(features)
        confidence = self.predict_confidence(features, pred_map)
        return gate_features(features, confidence), pred_map, confidence
