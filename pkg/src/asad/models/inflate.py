"""2D -> 3D weight inflation ("bootstrapping").

Every 2D kernel is repeated N times along the new temporal axis and divided
by N, so a temporally constant input produces the same activations as the 2D
network on a single slice. Batch-norm parameters, running statistics and the
classifier head carry over unchanged.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .checkpoint import Checkpoint
from .densenet import DenseNetConfig, build_densenet3d


class InflationError(ValueError):
    pass


def inflate_kernel(weight: np.ndarray, n: int) -> np.ndarray:
    """Stack a ``(out, in, *k)`` kernel ``n`` times on a new trailing axis, scaled by 1/n."""
    if n < 1:
        raise ValueError("temporal extent must be >= 1")
    return np.repeat(weight[..., None], n, axis=-1) / weight.dtype.type(n)


def inflate_2d_to_3d(ckpt2d: Checkpoint, samples: int, config3d: DenseNetConfig | None = None) -> Checkpoint:
    if ckpt2d.model_id != "densenet2d":
        raise InflationError(f"expected a densenet2d checkpoint, got {ckpt2d.model_id!r}")
    cfg2d = DenseNetConfig.from_dict(ckpt2d.config)
    config3d = config3d or cfg2d.as_3d(samples)
    if config3d.samples != samples:
        config3d = config3d.as_3d(samples)
    for key in ("growth_rate", "compression", "num_blocks", "layers_per_block", "num_classes", "in_channels"):
        if getattr(cfg2d, key) != getattr(config3d, key):
            raise InflationError(f"config mismatch on {key}: 2D {getattr(cfg2d, key)} vs 3D {getattr(config3d, key)}")

    target = build_densenet3d(config3d, dtype=next(iter(ckpt2d.tensors.values())).dtype).state_dict()
    src_names, dst_names = list(ckpt2d.tensors), list(target)
    for i, (a, b) in enumerate(zip(src_names, dst_names)):
        if a != b:
            raise InflationError(f"layer inventories diverge at entry {i}: 2D {a!r} vs 3D {b!r}")
    if len(src_names) != len(dst_names):
        i = min(len(src_names), len(dst_names))
        extra = (src_names + dst_names)[i] if len(src_names) > i else dst_names[i]
        raise InflationError(f"layer inventories diverge at entry {i}: unmatched {extra!r}")

    tensors = OrderedDict()
    for name, w2 in ckpt2d.tensors.items():
        shape3 = target[name].shape
        if w2.shape == shape3:
            tensors[name] = w2.copy()
        elif w2.ndim + 1 == len(shape3) and shape3[:-1] == w2.shape:
            tensors[name] = inflate_kernel(w2, shape3[-1])
        else:
            raise InflationError(f"{name}: 2D shape {w2.shape} cannot inflate to {shape3}")
    meta = dict(ckpt2d.metadata)
    meta["inflated_from"] = "densenet2d"
    return Checkpoint("densenet3d", config3d.to_dict(), tensors, ckpt2d.seed, meta)
