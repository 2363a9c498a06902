"""DenseNet-2D (per time slice) and its inflated DenseNet-3D counterpart.

Both graphs share parameter names, so a 2D state dict maps one-to-one onto
the 3D graph (see :mod:`asad.models.inflate`).

Layout: 2D input ``(batch, 1, H, W)``, 3D input ``(batch, 1, H, W, T)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nn import (AvgPool, BatchNorm, Conv, GlobalAvgPool, Linear, MaxPool, Module,
                  ReLU, Sequential, ShapeError)

GRID = (10, 11)


@dataclass
class DenseNetConfig:
    growth_rate: int = 16
    compression: float = 0.5
    num_blocks: int = 4
    layers_per_block: int = 4
    num_classes: int = 2
    in_channels: int = 1
    dims: int = 2
    samples: int | None = None  # temporal extent T, 3D only
    grid: tuple = GRID

    @property
    def bottleneck_width(self) -> int:
        return 4 * self.growth_rate

    @property
    def stem_channels(self) -> int:
        return 2 * self.growth_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNetConfig":
        d = dict(d)
        d["grid"] = tuple(d.get("grid", GRID))
        return cls(**d)

    def as_3d(self, samples: int) -> "DenseNetConfig":
        d = self.to_dict()
        d.update(dims=3, samples=samples)
        return DenseNetConfig.from_dict(d)

    def as_2d(self) -> "DenseNetConfig":
        d = self.to_dict()
        d.update(dims=2, samples=None)
        return DenseNetConfig.from_dict(d)

    def input_shape(self) -> tuple:
        if self.dims == 2:
            return (self.in_channels,) + tuple(self.grid)
        return (self.in_channels,) + tuple(self.grid) + (self.samples,)


def _geom(dims):
    """Kernel/stride/padding tuples for the 2D layers and their 3D inflation."""
    if dims == 2:
        return dict(k1=(1, 1), k3=(3, 3), pad3=(1, 1), pool_k=(3, 3), pool_s=(2, 2), pool_p=(1, 1),
                    trans_k=(2, 2), trans_s=(1, 1))
    if dims == 3:
        return dict(k1=(1, 1, 1), k3=(3, 3, 1), pad3=(1, 1, 0), pool_k=(3, 3, 1), pool_s=(2, 2, 1),
                    pool_p=(1, 1, 0), trans_k=(2, 2, 7), trans_s=(1, 1, 3))
    raise ValueError(f"dims must be 2 or 3, got {dims}")


class CompositeLayer(Sequential):
    """BN-ReLU-Conv(1x1)-BN-ReLU-Conv(3x3)."""

    def __init__(self, in_ch, mid_ch, out_ch, g, rng, dtype):
        super().__init__(
            BatchNorm(in_ch, dtype=dtype), ReLU(),
            Conv(in_ch, mid_ch, g["k1"], bias=False, rng=rng, dtype=dtype),
            BatchNorm(mid_ch, dtype=dtype), ReLU(),
            Conv(mid_ch, out_ch, g["k3"], padding=g["pad3"], bias=False, rng=rng, dtype=dtype),
            names=["bn1", "relu1", "conv1", "bn2", "relu2", "conv2"],
        )


class DenseBlock(Module):
    """Each layer sees the channel concatenation of the block input and all earlier outputs."""

    def __init__(self, in_ch, n_layers, growth, bottleneck, g, rng, dtype):
        super().__init__()
        self.in_channels = in_ch
        self.growth = growth
        self.n_layers = n_layers
        for i in range(n_layers):
            setattr(self, f"layer{i}", CompositeLayer(in_ch + i * growth, bottleneck, growth, g, rng, dtype))

    def layer_inputs(self):
        """Input width of each composite layer."""
        return [self.in_channels + i * self.growth for i in range(self.n_layers)]

    def forward(self, x):
        feats = x
        for layer in self._modules.values():
            feats = np.concatenate([feats, layer.forward(feats)], axis=1)
        return feats

    def backward(self, grad):
        g = grad.copy()
        for i, layer in reversed(list(enumerate(self._modules.values()))):
            lo = self.in_channels + i * self.growth
            g_in = layer.backward(g[:, lo:lo + self.growth])
            g = g[:, :lo]
            g += g_in
        return g

    def output_shape(self, shape):
        if shape[0] != self.in_channels:
            raise ShapeError(f"dense block: input width {shape[0]} != {self.in_channels}")
        for layer in self._modules.values():
            out = layer.output_shape(shape)
            if out[1:] != shape[1:]:
                raise ShapeError(f"dense block: layer changed spatial extent {shape[1:]} -> {out[1:]}")
            shape = (shape[0] + out[0],) + shape[1:]
        return shape


class Transition(Sequential):
    """BN-ReLU-Conv(1x1) then unpadded average pooling."""

    def __init__(self, in_ch, out_ch, g, rng, dtype):
        super().__init__(
            BatchNorm(in_ch, dtype=dtype), ReLU(),
            Conv(in_ch, out_ch, g["k1"], bias=False, rng=rng, dtype=dtype),
            AvgPool(g["trans_k"], g["trans_s"]),
            names=["bn", "relu", "conv", "pool"],
        )


class DenseNet(Sequential):
    """DenseNet-2D / DenseNet-3D classifier; :attr:`shape_trace` holds the validated shape trace."""

    def __init__(self, config: DenseNetConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.config = config
        g = _geom(config.dims)
        rng = np.random.default_rng(seed)
        k = config.growth_rate
        stem_out, mid = config.stem_channels, config.bottleneck_width
        self.stem = CompositeLayer(config.in_channels, mid, stem_out, g, rng, dtype)
        self.pool = MaxPool(g["pool_k"], g["pool_s"], g["pool_p"])
        width = stem_out
        for b in range(config.num_blocks):
            setattr(self, f"block{b}", DenseBlock(width, config.layers_per_block, k, mid, g, rng, dtype))
            width += config.layers_per_block * k
            if b < config.num_blocks - 1:
                out = int(np.floor(config.compression * width))
                if out < 1:
                    raise ShapeError(f"transition {b}: compression {config.compression} leaves 0 channels")
                setattr(self, f"trans{b}", Transition(width, out, g, rng, dtype))
                width = out
        self.gap = GlobalAvgPool()
        self.fc = Linear(width, config.num_classes, rng=rng, dtype=dtype)
        self.shape_trace = self.build_trace()

    def build_trace(self):
        """Validate shape composition stage by stage; returns ``[(stage, shape), ...]``."""
        shape = self.config.input_shape()
        trace = [("input", shape)]
        for name, layer in self._modules.items():
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"stage '{name}' underflows for input {self.config.input_shape()}: {exc}") from None
            trace.append((name, shape))
        return trace

    def forward(self, x):
        expect = self.config.input_shape()
        if tuple(x.shape[1:]) != expect:
            raise ShapeError(f"input shape {tuple(x.shape[1:])} != expected {expect}")
        return super().forward(x)


def build_densenet2d(config: DenseNetConfig | None = None, seed: int = 0, dtype=np.float32) -> DenseNet:
    config = config or DenseNetConfig()
    if config.dims != 2:
        config = config.as_2d()
    return DenseNet(config, seed=seed, dtype=dtype)


def build_densenet3d(config: DenseNetConfig | None = None, samples: int | None = None,
                     seed: int = 0, dtype=np.float32) -> DenseNet:
    config = config or DenseNetConfig()
    if samples is not None or config.dims != 3:
        config = config.as_3d(samples if samples is not None else config.samples)
    if config.samples is None or config.samples < 1:
        raise ShapeError("DenseNet-3D needs a positive temporal extent")
    return DenseNet(config, seed=seed, dtype=dtype)
