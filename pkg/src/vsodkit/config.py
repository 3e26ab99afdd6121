"""Flat JSON run configuration.

One document, one level of keys, every field defaulted. Unknown keys are hard
errors so typos never silently train the wrong model.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from vsodkit.encoder import EncoderConfig
from vsodkit.model import FUSION_MODES

_FLOAT_FIELDS = {"learning_rate"}
_INT_FIELDS = {
    "batch_size",
    "input_size",
    "max_steps",
    "seed",
    "base_channels",
    "checkpoint_every",
    "log_every",
}
_BOOL_FIELDS = {"use_ssim", "use_iou", "augment"}
_STR_FIELDS = {"fusion_mode"}
_OPT_STR_FIELDS = {"train_data", "eval_data"}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 4
    input_size: int = 64  # paper-scale 448 stays expressible
    max_steps: int = 200
    seed: int = 0
    fusion_mode: str = "cag_dde"
    base_channels: int = 16
    use_ssim: bool = True
    use_iou: bool = True
    augment: bool = False
    checkpoint_every: int = 0  # 0: only the final checkpoint
    log_every: int = 1
    train_data: str | None = None
    eval_data: str | None = None

    def __post_init__(self):
        for name in _FLOAT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"config field '{name}' must be a number")
            object.__setattr__(self, name, float(value))
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"config field '{name}' must be an integer")
        for name in _BOOL_FIELDS:
            if not isinstance(getattr(self, name), bool):
                raise ValueError(f"config field '{name}' must be a boolean")
        for name in _STR_FIELDS:
            if not isinstance(getattr(self, name), str):
                raise ValueError(f"config field '{name}' must be a string")
        for name in _OPT_STR_FIELDS:
            value = getattr(self, name)
            if value is not None and not isinstance(value, str):
                raise ValueError(f"config field '{name}' must be a string or null")

        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.input_size < 32 or self.input_size % 32 != 0:
            raise ValueError("input_size must be a positive multiple of 32")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(
                f"unknown fusion_mode '{self.fusion_mode}'; expected one of {FUSION_MODES}"
            )

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(base_channels=self.base_channels)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ValueError("config document must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                raise ValueError(f"config must be flat; key '{key}' holds a nested value")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_file(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
