"""Layer modules wrapping the kernels in :mod:`asad.nn.functional`."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .core import Module, Parameter


def kaiming_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv(Module):
    """2D or 3D convolution; the rank is ``len(kernel)``."""

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 bias=True, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = tuple(int(k) for k in kernel)
        nd = len(self.kernel)
        self.stride = F._as_tuple(stride, nd, "stride")
        self.padding = F._as_tuple(padding, nd, "padding")
        self.in_channels, self.out_channels = in_channels, out_channels
        fan_in = in_channels * int(np.prod(self.kernel))
        self.weight = Parameter(kaiming_normal(rng, (out_channels, in_channels) + self.kernel, fan_in, dtype))
        if bias:
            self.bias = Parameter(np.zeros(out_channels, dtype=dtype))
        else:
            self.bias = None
        self.needs_input_grad = True
        self._cache = None

    def forward(self, x):
        b = self.bias.value if self.bias is not None else None
        out, self._cache = F.conv_forward(x, self.weight.value, b, self.stride, self.padding)
        return out

    def backward(self, grad):
        gx, gw, gb = F.conv_backward(grad, self._cache, self.weight.value, self.needs_input_grad)
        self.weight.grad += gw
        if self.bias is not None:
            self.bias.grad += gb
        return gx

    def output_shape(self, shape):
        c, *spatial = shape
        if len(spatial) != len(self.kernel):
            raise F.ShapeError(f"conv: input has {len(spatial)} spatial axes, kernel has {len(self.kernel)}")
        if c != self.in_channels:
            raise F.ShapeError(f"conv: channel axis mismatch ({c} != {self.in_channels})")
        out = F._window_geometry(spatial, self.kernel, self.stride, self.padding, "conv")
        return (self.out_channels,) + out


class BatchNorm(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))
        self._cache = None

    def forward(self, x):
        out, self._cache = F.batchnorm_forward(
            x, self.gamma.value, self.beta.value, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )
        return out

    def backward(self, grad):
        gx, gg, gb = F.batchnorm_backward(grad, self._cache)
        self.gamma.grad += gg
        self.beta.grad += gb
        return gx

    def output_shape(self, shape):
        if shape[0] != self.channels:
            raise F.ShapeError(f"batchnorm: channel axis extent {shape[0]} != {self.channels}")
        return shape


class ReLU(Module):
    def forward(self, x):
        self._x = x
        return F.relu(x)

    def backward(self, grad):
        return F.relu_backward(grad, self._x)


class MaxPool(Module):
    def __init__(self, kernel, stride, padding=0):
        super().__init__()
        self.kernel = tuple(kernel)
        nd = len(self.kernel)
        self.stride = F._as_tuple(stride, nd, "stride")
        self.padding = F._as_tuple(padding, nd, "padding")

    def forward(self, x):
        out, self._cache = F.maxpool_forward(x, self.kernel, self.stride, self.padding)
        return out

    def backward(self, grad):
        return F.maxpool_backward(grad, self._cache)

    def output_shape(self, shape):
        return (shape[0],) + F._window_geometry(shape[1:], self.kernel, self.stride, self.padding, "maxpool")


class AvgPool(Module):
    def __init__(self, kernel, stride):
        super().__init__()
        self.kernel = tuple(kernel)
        self.stride = F._as_tuple(stride, len(self.kernel), "stride")

    def forward(self, x):
        out, self._cache = F.avgpool_forward(x, self.kernel, self.stride)
        return out

    def backward(self, grad):
        return F.avgpool_backward(grad, self._cache)

    def output_shape(self, shape):
        return (shape[0],) + F._window_geometry(
            shape[1:], self.kernel, self.stride, (0,) * len(self.kernel), "avgpool")


class AxisMean(Module):
    """Mean over one spatial axis (``axis`` counts from the first spatial axis), kept as extent 1."""

    def __init__(self, axis: int):
        super().__init__()
        self.axis = axis

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=self.axis + 2, keepdims=True)

    def backward(self, grad):
        n = self._shape[self.axis + 2]
        return np.broadcast_to(grad / n, self._shape).copy()

    def output_shape(self, shape):
        shape = list(shape)
        shape[self.axis + 1] = 1
        return tuple(shape)


class GlobalAvgPool(Module):
    def forward(self, x):
        self._shape = x.shape
        return F.global_avg_pool(x)

    def backward(self, grad):
        return F.global_avg_pool_backward(grad, self._shape)

    def output_shape(self, shape):
        return (shape[0],)


class Flatten(Module):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)

    def output_shape(self, shape):
        return (int(np.prod(shape)),)


class Linear(Module):
    def __init__(self, in_features, out_features, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(kaiming_normal(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x):
        self._x = x
        return F.linear_forward(x, self.weight.value, None if self.bias is None else self.bias.value)

    def backward(self, grad):
        gx, gw, gb = F.linear_backward(grad, self._x, self.weight.value)
        self.weight.grad += gw
        if self.bias is not None:
            self.bias.grad += gb
        return gx

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise F.ShapeError(f"linear: input shape {shape} != ({self.in_features},)")
        return (self.out_features,)
