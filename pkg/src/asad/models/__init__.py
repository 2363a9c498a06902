"""Model builders, checkpoints and 2D->3D inflation."""
from __future__ import annotations

import numpy as np

from .baselines import BaselineNet, build_cnn3d, build_cnn_baseline
from .checkpoint import Checkpoint, CheckpointFormatError
from .densenet import DenseNet, DenseNetConfig, build_densenet2d, build_densenet3d
from .inflate import InflationError, inflate_2d_to_3d, inflate_kernel

MODEL_KINDS = ("cnn-baseline", "cnn3d", "densenet2d", "densenet3d")


def build_model(model_id: str, config: dict, seed: int = 0, dtype=np.float32):
    """Build a graph from a checkpoint-style ``(model_id, config)`` pair."""
    if model_id == "densenet2d":
        return build_densenet2d(DenseNetConfig.from_dict(config), seed=seed, dtype=dtype)
    if model_id == "densenet3d":
        return build_densenet3d(DenseNetConfig.from_dict(config), seed=seed, dtype=dtype)
    if model_id == "cnn-baseline":
        return build_cnn_baseline(config["samples"], n_channels=config.get("n_channels", 64),
                                  seed=seed, dtype=dtype)
    if model_id == "cnn3d":
        return build_cnn3d(config["samples"], seed=seed, dtype=dtype)
    raise ValueError(f"unknown model id {model_id!r}; expected one of {MODEL_KINDS}")


def model_config(model) -> dict:
    if isinstance(model, DenseNet):
        return model.config.to_dict()
    cfg = {"samples": model.samples}
    if model.kind == "cnn-baseline":
        cfg["n_channels"] = model.input_shape[1]
    return cfg


def model_id_of(model) -> str:
    if isinstance(model, DenseNet):
        return "densenet2d" if model.config.dims == 2 else "densenet3d"
    return model.kind


def to_checkpoint(model, seed: int = 0, metadata: dict | None = None, optimizer=None) -> Checkpoint:
    from collections import OrderedDict
    opt = OrderedDict(optimizer.state()) if optimizer is not None else OrderedDict()
    if optimizer is not None:
        metadata = dict(metadata or {}, adam_step=optimizer.step_count)
    return Checkpoint(model_id_of(model), model_config(model), model.state_dict(), seed,
                      dict(metadata or {}), opt)


def from_checkpoint(ckpt: Checkpoint, dtype=None):
    dtype = dtype or next(iter(ckpt.tensors.values())).dtype
    model = build_model(ckpt.model_id, ckpt.config, seed=ckpt.seed, dtype=dtype)
    model.load_state_dict(ckpt.tensors)
    return model


__all__ = [
    "BaselineNet", "Checkpoint", "CheckpointFormatError", "DenseNet", "DenseNetConfig",
    "InflationError", "MODEL_KINDS", "build_cnn3d", "build_cnn_baseline", "build_densenet2d",
    "build_densenet3d", "build_model", "from_checkpoint", "inflate_2d_to_3d", "inflate_kernel",
    "model_config", "model_id_of", "to_checkpoint",
]
