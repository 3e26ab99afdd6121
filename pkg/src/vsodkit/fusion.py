"""Merging the two recalibrated streams into one decoder feature.

The differential fusion enhances each branch with a convolution of the
cross-stream difference before concatenating and projecting. The difference
convolutions are bias-free so that zero weights degenerate to the identity,
and each branch keeps its own kernel. Concat/add/mul baselines with matched
trailing convolutions are provided for ablations.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from vsodkit.encoder import init_conv


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


class DifferentialEnhance(nn.Module):
    """Single-branch enhancement: conv(other - own) + own."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = init_conv(nn.Conv2d(channels, channels, 3, padding=1, bias=False))
        # residual-style start: the difference path grows from the identity,
        # so differential fusion begins as plain concat fusion
        nn.init.zeros_(self.conv.weight)

    def forward(self, own: torch.Tensor, other: torch.Tensor) -> torch.Tensor:
        _check_pair(own, other)
        return self.conv(other - own) + own


class DifferentialFusion(nn.Module):
    """Dual differential enhancement followed by concat + conv."""

    def __init__(self, channels: int):
        super().__init__()
        self.enhance_a = DifferentialEnhance(channels)
        self.enhance_b = DifferentialEnhance(channels)
        self.fuse = init_conv(nn.Conv2d(2 * channels, channels, 3, padding=1))

    def forward(self, feat_a: torch.Tensor, feat_b: torch.Tensor) -> torch.Tensor:
        _check_pair(feat_a, feat_b)
        enhanced_a = self.enhance_a(feat_a, feat_b)
        enhanced_b = self.enhance_b(feat_b, feat_a)
        return F.relu(self.fuse(torch.cat([enhanced_a, enhanced_b], dim=1)))


class ConcatFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.fuse = init_conv(nn.Conv2d(2 * channels, channels, 3, padding=1))

    def forward(self, feat_a: torch.Tensor, feat_b: torch.Tensor) -> torch.Tensor:
        _check_pair(feat_a, feat_b)
        return F.relu(self.fuse(torch.cat([feat_a, feat_b], dim=1)))


class AddFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.fuse = init_conv(nn.Conv2d(channels, channels, 3, padding=1))

    def forward(self, feat_a: torch.Tensor, feat_b: torch.Tensor) -> torch.Tensor:
        _check_pair(feat_a, feat_b)
        return F.relu(self.fuse(feat_a + feat_b))


class MulFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.fuse = init_conv(nn.Conv2d(channels, channels, 3, padding=1))

    def forward(self, feat_a: torch.Tensor, feat_b: torch.Tensor) -> torch.Tensor:
        _check_pair(feat_a, feat_b)
        return F.relu(self.fuse(feat_a * feat_b))
