"""Shared-weight feature pyramid encoder.

A configurable strided-convolution pyramid stands in for a large pretrained
backbone: five stages, each a stride-2 convolution followed by residual blocks,
with group normalization so tiny batches stay stable. The same parameter set
encodes both the RGB frame and the rendered flow image.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

STRIDE_LEVELS = 5
MAX_TOP_CHANNELS = 1024


def validate_image(x: torch.Tensor, name: str = "image") -> None:
    """Check the (B, 3, H, W) layout and the divisible-by-32 size contract."""
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValueError(f"{name} must have shape (batch, 3, H, W), got {tuple(x.shape)}")
    h, w = x.shape[2], x.shape[3]
    for axis, size in (("H", h), ("W", w)):
        if size < 32 or size % 32 != 0:
            raise ValueError(
                f"{name} dimension {axis}={size} must be a multiple of 32 and at least 32"
            )


@dataclass(frozen=True)
class EncoderConfig:
    """Width/depth schedule of the pyramid.

    Level i has ``base_channels * width_multipliers[i]`` channels at stride
    ``2**(i+1)``.
    """

    base_channels: int = 16
    width_multipliers: tuple[int, ...] = (1, 2, 4, 8, 16)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1, 1)

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if len(self.width_multipliers) != STRIDE_LEVELS:
            raise ValueError("width_multipliers must have 5 entries")
        if len(self.blocks_per_stage) != STRIDE_LEVELS:
            raise ValueError("blocks_per_stage must have 5 entries")
        if any(m < 1 for m in self.width_multipliers):
            raise ValueError("width_multipliers entries must be >= 1")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ValueError("blocks_per_stage entries must be >= 1")
        if list(self.width_multipliers) != sorted(self.width_multipliers):
            raise ValueError("width_multipliers must be non-decreasing")
        if self.channels[-1] > MAX_TOP_CHANNELS:
            raise ValueError(
                f"top-level width {self.channels[-1]} exceeds {MAX_TOP_CHANNELS}"
            )

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.width_multipliers)


def group_norm(channels: int) -> nn.GroupNorm:
    groups = 4 if channels % 4 == 0 else 1
    return nn.GroupNorm(groups, channels)


def init_conv(conv: nn.Conv2d) -> nn.Conv2d:
    """Fan-in-scaled normal kernels, zero biases."""
    nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
    if conv.bias is not None:
        nn.init.zeros_(conv.bias)
    return conv


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = init_conv(nn.Conv2d(channels, channels, 3, padding=1))
        self.norm1 = group_norm(channels)
        self.conv2 = init_conv(nn.Conv2d(channels, channels, 3, padding=1))
        self.norm2 = group_norm(channels)
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + x)


class EncoderStage(nn.Module):
    """Stride-2 reduction followed by residual refinement."""

    def __init__(self, in_channels: int, out_channels: int, blocks: int):
        super().__init__()
        self.down = init_conv(nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1))
        self.norm = group_norm(out_channels)
        self.act = nn.ReLU()
        self.blocks = nn.Sequential(*[ResidualBlock(out_channels) for _ in range(blocks)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.blocks(self.act(self.norm(self.down(x))))


class PyramidEncoder(nn.Module):
    """Emits five feature levels at strides 2, 4, 8, 16, 32."""

    def __init__(self, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config or EncoderConfig()
        chans = self.config.channels
        stages = []
        in_c = 3
        for c, blocks in zip(chans, self.config.blocks_per_stage):
            stages.append(EncoderStage(in_c, c, blocks))
            in_c = c
        self.stages = nn.ModuleList(stages)

    @property
    def channels(self) -> tuple[int, ...]:
        return self.config.channels

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        validate_image(x)
        levels = []
        out = x
        for stage in self.stages:
            out = stage(out)
            levels.append(out)
        return levels

    def forward_pair(
        self, rgb: torch.Tensor, flow_img: torch.Tensor
    ) -> tuple[list[torch.Tensor], list[torch.Tensor]]:
        """Encode both streams with the same weights."""
        if rgb.shape != flow_img.shape:
            raise ValueError(
                f"rgb and flow image shapes differ: {tuple(rgb.shape)} vs {tuple(flow_img.shape)}"
            )
        return self.forward(rgb), self.forward(flow_img)
