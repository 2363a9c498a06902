"""Ablation baselines: a channel-by-time CNN and a shallow gridded 3D CNN."""
from __future__ import annotations

import numpy as np

from ..nn import AxisMean, Conv, Flatten, Linear, ReLU, Sequential, ShapeError
from .densenet import GRID

N_CHANNELS = 64


class BaselineNet(Sequential):
    def __init__(self, kind: str, layers, names, input_shape, samples):
        super().__init__(*layers, names=names)
        self.kind = kind
        self.samples = samples
        self.input_shape = input_shape
        self.shape_trace = [("input", input_shape)] + self.trace(input_shape)
        self.conv.needs_input_grad = False

    def forward(self, x):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"input shape {tuple(x.shape[1:])} != expected {self.input_shape}")
        return super().forward(x)


def build_cnn_baseline(samples: int, n_channels: int = N_CHANNELS, filters: int = 5,
                       kernel_time: int = 17, seed: int = 0, dtype=np.float32) -> BaselineNet:
    """Spatio-temporal filters spanning every channel, ReLU, temporal mean, two FC layers.

    Input is the channel-by-time matrix as a one-plane image, ``(batch, 1, C, T)``.
    """
    if samples < kernel_time:
        raise ShapeError(f"CNN-baseline needs T >= {kernel_time}, got {samples}")
    rng = np.random.default_rng(seed)
    layers = [
        Conv(1, filters, (n_channels, kernel_time), rng=rng, dtype=dtype),
        ReLU(),
        AxisMean(axis=1),
        Flatten(),
        Linear(filters, filters, rng=rng, dtype=dtype),
        ReLU(),
        Linear(filters, 2, rng=rng, dtype=dtype),
    ]
    names = ["conv", "relu", "tpool", "flatten", "fc1", "relu_fc", "fc2"]
    return BaselineNet("cnn-baseline", layers, names, (1, n_channels, samples), samples)


def build_cnn3d(samples: int, filters: int = 20, kernel: int = 5, seed: int = 0,
                dtype=np.float32) -> BaselineNet:
    """Spatial-only filters on the electrode grid, ReLU, temporal mean, two FC layers."""
    if samples < 1:
        raise ShapeError("CNN-3D needs T >= 1")
    rng = np.random.default_rng(seed)
    h, w = GRID[0] - kernel + 1, GRID[1] - kernel + 1
    layers = [
        Conv(1, filters, (kernel, kernel, 1), rng=rng, dtype=dtype),
        ReLU(),
        AxisMean(axis=2),
        Flatten(),
        Linear(filters * h * w, filters, rng=rng, dtype=dtype),
        ReLU(),
        Linear(filters, 2, rng=rng, dtype=dtype),
    ]
    names = ["conv", "relu", "tpool", "flatten", "fc1", "relu_fc", "fc2"]
    return BaselineNet("cnn3d", layers, names, (1,) + GRID + (samples,), samples)
