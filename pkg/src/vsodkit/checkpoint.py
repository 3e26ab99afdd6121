"""Deterministic binary checkpoints.

Layout: 8-byte magic, little-endian uint64 header length, a sorted-keys JSON
header, then raw tensor bytes in the order the header lists them. Serializing
the same state twice yields identical bytes, so save -> load -> save is a
byte-level fixed point. Writes go to a temp file in the target directory and
are published with os.replace, so a crash mid-write never exposes a partial
checkpoint under the final name.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from vsodkit.config import TrainConfig

MAGIC = b"VSODCKP1"

_DTYPES = {
    "float32": torch.float32,
    "float64": torch.float64,
    "int64": torch.int64,
    "uint8": torch.uint8,
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(RuntimeError):
    pass


@dataclass
class CheckpointData:
    step: int
    config: TrainConfig
    tensors: dict[str, torch.Tensor]
    adam: dict  # hyperparameters + per-parameter step counts
    numpy_rng_state: dict


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    array = tensor.detach().cpu().contiguous().numpy()
    return array.tobytes()


def gather_state(
    model: torch.nn.Module,
    optimizer: torch.optim.Adam,
    config: TrainConfig,
    step: int,
    numpy_rng: np.random.Generator,
) -> CheckpointData:
    tensors: dict[str, torch.Tensor] = {}
    for name, value in model.state_dict().items():
        tensors[f"model/{name}"] = value

    param_names = {id(p): n for n, p in model.named_parameters()}
    group = optimizer.param_groups[0]
    adam = {
        "lr": group["lr"],
        "betas": list(group["betas"]),
        "eps": group["eps"],
        "weight_decay": group["weight_decay"],
        "steps": {},
    }
    for param, state in optimizer.state.items():
        name = param_names[id(param)]
        step_val = state["step"]
        adam["steps"][name] = float(
            step_val.item() if isinstance(step_val, torch.Tensor) else step_val
        )
        tensors[f"optim/{name}/exp_avg"] = state["exp_avg"]
        tensors[f"optim/{name}/exp_avg_sq"] = state["exp_avg_sq"]

    tensors["rng/torch"] = torch.get_rng_state()
    return CheckpointData(
        step=step,
        config=config,
        tensors=tensors,
        adam=adam,
        numpy_rng_state=numpy_rng.bit_generator.state,
    )


def save_checkpoint(path, data: CheckpointData) -> None:
    path = Path(path)
    entries = []
    blobs = []
    for name in sorted(data.tensors):
        tensor = data.tensors[name]
        if tensor.dtype not in _DTYPE_NAMES:
            raise CheckpointError(f"unsupported tensor dtype {tensor.dtype} for '{name}'")
        entries.append([name, _DTYPE_NAMES[tensor.dtype], list(tensor.shape)])
        blobs.append(_tensor_bytes(tensor))
    header = {
        "version": 1,
        "step": data.step,
        "config": data.config.to_dict(),
        "adam": data.adam,
        "numpy_rng": data.numpy_rng_state,
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header_bytes).to_bytes(8, "little"))
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(path) -> CheckpointData:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    header_len = int.from_bytes(raw[len(MAGIC) : len(MAGIC) + 8], "little")
    body_start = len(MAGIC) + 8 + header_len
    if len(raw) < body_start:
        raise CheckpointError(f"{path} is truncated (header)")
    try:
        header = json.loads(raw[len(MAGIC) + 8 : body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc

    tensors: dict[str, torch.Tensor] = {}
    offset = body_start
    for name, dtype_name, shape in header["tensors"]:
        dtype = _DTYPES[dtype_name]
        count = 1
        for dim in shape:
            count *= dim
        nbytes = count * torch.empty((), dtype=dtype).element_size()
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated (tensor '{name}')")
        array = np.frombuffer(raw, dtype=dtype_name, count=count, offset=offset).copy()
        tensors[name] = torch.from_numpy(array).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - offset} trailing bytes")

    return CheckpointData(
        step=header["step"],
        config=TrainConfig.from_dict(header["config"]),
        tensors=tensors,
        adam=header["adam"],
        numpy_rng_state=header["numpy_rng"],
    )


def restore_model(model: torch.nn.Module, data: CheckpointData) -> None:
    state = {
        name[len("model/") :]: tensor
        for name, tensor in data.tensors.items()
        if name.startswith("model/")
    }
    model.load_state_dict(state)


def restore_optimizer(
    optimizer: torch.optim.Adam, model: torch.nn.Module, data: CheckpointData
) -> None:
    group = optimizer.param_groups[0]
    group["lr"] = data.adam["lr"]
    group["betas"] = tuple(data.adam["betas"])
    group["eps"] = data.adam["eps"]
    group["weight_decay"] = data.adam["weight_decay"]
    params = dict(model.named_parameters())
    for name, step_val in data.adam["steps"].items():
        param = params[name]
        optimizer.state[param] = {
            "step": torch.tensor(step_val),
            "exp_avg": data.tensors[f"optim/{name}/exp_avg"].clone(),
            "exp_avg_sq": data.tensors[f"optim/{name}/exp_avg_sq"].clone(),
        }


def restore_rng(data: CheckpointData) -> np.random.Generator:
    """Reinstates the torch RNG and returns a numpy generator mid-stream."""
    torch.set_rng_state(data.tensors["rng/torch"].to(torch.uint8))
    rng = np.random.default_rng()
    rng.bit_generator.state = data.numpy_rng_state
    return rng
