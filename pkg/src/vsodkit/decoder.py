"""Top-down output decoder.

The deepest fused feature passes through an atrous spatial pyramid (dilated
3x3 branches plus a global-context branch) and is concatenated back onto
itself; every shallower level concatenates the upsampled decoded feature from
below. A 1-channel projection and a final x2 bilinear upsample produce the
saliency map at input resolution.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from vsodkit.encoder import init_conv

ASPP_RATES = (6, 12, 18)
ASPP_RATES_SMALL = (1, 2, 3)
ASPP_SMALL_LIMIT = 7


class ASPP(nn.Module):
    """Parallel dilated context branches, concatenated and projected back.

    Dilation rates drop to (1, 2, 3) when the map is smaller than 7x7, so the
    module works on the tiny level-5 maps of desk-scale inputs; the kernels
    themselves are shared across both regimes.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.point = init_conv(nn.Conv2d(channels, channels, 1))
        self.dilated = nn.ModuleList(
            [init_conv(nn.Conv2d(channels, channels, 3, padding=1)) for _ in range(3)]
        )
        self.pool_conv = init_conv(nn.Conv2d(channels, channels, 1))
        self.project = init_conv(nn.Conv2d(5 * channels, channels, 1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        rates = ASPP_RATES if min(h, w) >= ASPP_SMALL_LIMIT else ASPP_RATES_SMALL
        branches = [F.relu(self.point(x))]
        for conv, rate in zip(self.dilated, rates):
            branches.append(
                F.relu(F.conv2d(x, conv.weight, conv.bias, padding=rate, dilation=rate))
            )
        pooled = F.relu(self.pool_conv(x.mean(dim=(2, 3), keepdim=True)))
        branches.append(pooled.expand(-1, -1, h, w))
        return F.relu(self.project(torch.cat(branches, dim=1)))


class SaliencyDecoder(nn.Module):
    """Combines the five fused features top-down into the final map."""

    def __init__(self, channels: tuple[int, ...]):
        super().__init__()
        if len(channels) != 5:
            raise ValueError("decoder expects 5 channel widths")
        self.channels = tuple(channels)
        self.aspp = ASPP(channels[4])
        # level i (1-based) conv sees its own width plus the decoded width below
        self.convs = nn.ModuleList(
            [
                init_conv(nn.Conv2d(channels[0] + channels[1], channels[0], 3, padding=1)),
                init_conv(nn.Conv2d(channels[1] + channels[2], channels[1], 3, padding=1)),
                init_conv(nn.Conv2d(channels[2] + channels[3], channels[2], 3, padding=1)),
                init_conv(nn.Conv2d(channels[3] + channels[4], channels[3], 3, padding=1)),
                init_conv(nn.Conv2d(2 * channels[4], channels[4], 3, padding=1)),
            ]
        )
        self.head = init_conv(nn.Conv2d(channels[0], 1, 1))

    def decode_level(
        self, level: int, feature: torch.Tensor, below: torch.Tensor
    ) -> torch.Tensor:
        """Decode one level (1-based). ``below`` is the decoded feature from
        the next-deeper level, or the ASPP output at level 5."""
        if level == 5:
            merged = below
        else:
            merged = F.interpolate(
                below, scale_factor=2, mode="bilinear", align_corners=False
            )
        if merged.shape[-2:] != feature.shape[-2:]:
            raise ValueError(
                f"level {level}: upsampled feature {tuple(merged.shape[-2:])}"
                f" does not match {tuple(feature.shape[-2:])}"
            )
        return F.relu(self.convs[level - 1](torch.cat([feature, merged], dim=1)))

    def predict_final(self, decoded_top: torch.Tensor) -> torch.Tensor:
        """Project to one channel, upsample to input resolution, sigmoid."""
        logits = self.head(decoded_top)
        logits = F.interpolate(logits, scale_factor=2, mode="bilinear", align_corners=False)
        return torch.sigmoid(logits)

    def forward(self, fused: list[torch.Tensor]) -> torch.Tensor:
        if len(fused) != 5:
            raise ValueError(f"decoder expects 5 fused levels, got {len(fused)}")
        decoded = self.decode_level(5, fused[4], self.aspp(fused[4]))
        for level in (4, 3, 2, 1):
            decoded = self.decode_level(level, fused[level - 1], decoded)
        return self.predict_final(decoded)
