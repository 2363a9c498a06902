"""Forward and backward kernels for the layer set used by the ASAD models.

All functions operate on channel-first numpy arrays, ``(batch, channels,
*spatial)``, where ``spatial`` has rank 2 (H, W) or 3 (H, W, T).
Convolution is cross-correlation (no kernel flip).
"""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "out_extent",
    "conv_forward",
    "conv_backward",
    "relu",
    "relu_backward",
    "batchnorm_forward",
    "batchnorm_backward",
    "maxpool_forward",
    "maxpool_backward",
    "avgpool_forward",
    "avgpool_backward",
    "global_avg_pool",
    "global_avg_pool_backward",
    "linear_forward",
    "linear_backward",
    "softmax",
    "softmax_cross_entropy",
]

# im2col is used above this many kernel taps; below it the tap loop is cheaper
# on memory (the stem 3x3 conv on 10x11x128 volumes would need ~0.5 GB).
_IM2COL_MIN_TAPS = 28


class ShapeError(ValueError):
    """Raised when tensor extents are inconsistent with a layer spec."""


def _as_tuple(value: int | Sequence[int], n: int, what: str) -> tuple[int, ...]:
    if np.isscalar(value):
        return (int(value),) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ShapeError(f"{what} has {len(value)} entries, expected {n}")
    return value


def out_extent(n: int, kernel: int, stride: int = 1, pad: int = 0) -> int:
    """floor((n + 2*pad - kernel) / stride) + 1; raises ShapeError when that is below 1."""
    m = n + 2 * pad - kernel
    if m < 0:
        raise ShapeError(f"non-positive output extent (input {n}, kernel {kernel}, stride {stride}, pad {pad})")
    return m // stride + 1


def _window_geometry(in_shape, kernel, stride, padding, op):
    nd = len(kernel)
    out = []
    for axis, (n, k, s, p) in enumerate(zip(in_shape, kernel, stride, padding)):
        if s < 1 or p < 0 or k < 1:
            raise ShapeError(f"{op}: invalid kernel/stride/padding on spatial axis {axis}")
        m = n + 2 * p - k
        if m < 0:
            raise ShapeError(
                f"{op}: non-positive output extent on spatial axis {axis} "
                f"(input {n}, kernel {k}, stride {s}, pad {p})"
            )
        out.append(m // s + 1)
    assert len(out) == nd
    return tuple(out)


def _tap_slices(offsets, stride, out_shape):
    return (slice(None), slice(None)) + tuple(
        slice(o, o + s * (m - 1) + 1, s) for o, s, m in zip(offsets, stride, out_shape)
    )


def _pad(x, padding, value=0.0):
    if not any(padding):
        return x
    widths = [(0, 0), (0, 0)] + [(p, p) for p in padding]
    return np.pad(x, widths, mode="constant", constant_values=value)


def conv_forward(x, weight, bias=None, stride=1, padding=0):
    """N-d convolution. Returns ``(out, cache)``.

    weight has shape ``(out_ch, in_ch, *kernel)``.
    """
    nd = weight.ndim - 2
    if x.ndim != nd + 2:
        raise ShapeError(f"conv: input has {x.ndim - 2} spatial axes, kernel has {nd}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"conv: channel axis mismatch (input {x.shape[1]}, weight expects {weight.shape[1]})"
        )
    stride = _as_tuple(stride, nd, "stride")
    padding = _as_tuple(padding, nd, "padding")
    kernel = weight.shape[2:]
    out_shape = _window_geometry(x.shape[2:], kernel, stride, padding, "conv")
    B, O = x.shape[0], weight.shape[0]
    taps = int(np.prod(kernel))

    if all(s == 1 for s in stride) and taps < _IM2COL_MIN_TAPS:
        # cache keeps the unpadded input on this path
        out = _conv_unit_stride(x, weight, padding, out_shape)
        if bias is not None:
            out += bias.reshape((1, O) + (1,) * nd)
        return out, (x, x.shape, stride, padding, out_shape)
    xp = _pad(x, padding)
    if taps >= _IM2COL_MIN_TAPS:
        cols = _im2col(xp, kernel, stride, out_shape)  # B, out..., C, k...
        red = tuple(range(1 + nd, cols.ndim))
        out = np.tensordot(cols, weight, axes=(red, tuple(range(1, weight.ndim))))
        out = np.moveaxis(out, -1, 1)
    else:
        acc = np.zeros((O, B) + out_shape, dtype=np.result_type(x, weight))
        for offs in itertools.product(*(range(k) for k in kernel)):
            patch = xp[_tap_slices(offs, stride, out_shape)]
            acc += np.tensordot(weight[(slice(None), slice(None)) + offs], patch, axes=([1], [1]))
        out = np.moveaxis(acc, 0, 1)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.reshape((1, O) + (1,) * nd)
    cache = (xp, x.shape, stride, padding, out_shape)
    return out, cache


def _shift_ranges(offs, padding, n_in, n_out):
    """Per axis: output range and input range that tap ``offs`` connects (zero padding)."""
    out_sl, in_sl = [], []
    for o, p, n, m in zip(offs, padding, n_in, n_out):
        lo = max(0, p - o)
        hi = min(m, n + p - o)
        out_sl.append(slice(lo, hi))
        in_sl.append(slice(lo + o - p, hi + o - p))
    return tuple(out_sl), tuple(in_sl)


def _conv_unit_stride(x, weight, padding, out_shape):
    # Project every input voxel through all taps at once (one batched GEMM on
    # contiguous memory), then shift-add the per-tap outputs.
    B, C = x.shape[:2]
    O, kernel = weight.shape[0], weight.shape[2:]
    taps = int(np.prod(kernel))
    w_all = np.moveaxis(weight.reshape(O, C, taps), 2, 0).reshape(taps * O, C)
    y = np.matmul(w_all, x.reshape(B, C, -1))
    if taps == 1 and not any(padding):
        return y.reshape((B, O) + out_shape)
    y = y.reshape((B, taps, O) + x.shape[2:])
    out = np.zeros((B, O) + out_shape, dtype=y.dtype)
    for idx, offs in enumerate(itertools.product(*(range(k) for k in kernel))):
        out_sl, in_sl = _shift_ranges(offs, padding, x.shape[2:], out_shape)
        out[(slice(None), slice(None)) + out_sl] += y[(slice(None), idx, slice(None)) + in_sl]
    return out


def _conv_unit_stride_backward(grad_out, x, weight, padding, need_input_grad):
    B, C = x.shape[:2]
    O, kernel = weight.shape[0], weight.shape[2:]
    taps = int(np.prod(kernel))
    N = int(np.prod(x.shape[2:]))
    if taps == 1 and not any(padding):
        d = grad_out.reshape(B, O, N)
    else:
        # d[b, tap, o, q] = grad_out[b, o, q - offs + pad], zero outside
        d = np.zeros((B, taps, O) + x.shape[2:], dtype=grad_out.dtype)
        for idx, offs in enumerate(itertools.product(*(range(k) for k in kernel))):
            out_sl, in_sl = _shift_ranges(offs, padding, x.shape[2:], grad_out.shape[2:])
            d[(slice(None), idx, slice(None)) + in_sl] = grad_out[(slice(None), slice(None)) + out_sl]
        d = d.reshape(B, taps * O, N)
    xf = x.reshape(B, C, N)
    gw_all = np.zeros((taps * O, C), dtype=np.result_type(grad_out, x))
    for b in range(B):
        gw_all += d[b] @ xf[b].T
    grad_w = np.moveaxis(gw_all.reshape(taps, O, C), 0, 2).reshape(weight.shape)
    grad_x = None
    if need_input_grad:
        w_all = np.moveaxis(weight.reshape(O, C, taps), 2, 0).reshape(taps * O, C)
        grad_x = np.matmul(w_all.T, d).reshape(x.shape)
    return grad_x, grad_w


def _im2col(xp, kernel, stride, out_shape):
    nd = len(kernel)
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=tuple(range(2, 2 + nd)))
    win = win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]
    win = win[(slice(None), slice(None)) + tuple(slice(0, m) for m in out_shape)]
    # B, C, out..., k...  ->  B, out..., C, k...
    return np.moveaxis(win, 1, 1 + nd)


def conv_backward(grad_out, cache, weight, need_input_grad=True):
    """Returns ``(grad_input, grad_weight, grad_bias)``; grad_input is None if not needed."""
    xp, in_shape, stride, padding, out_shape = cache
    nd = weight.ndim - 2
    expected = (in_shape[0], weight.shape[0]) + out_shape
    if grad_out.shape != expected:
        raise ShapeError(f"conv backward: grad_out shape {grad_out.shape} != {expected}")
    kernel = weight.shape[2:]
    sp_axes = tuple(range(2, 2 + nd))
    grad_b = grad_out.sum(axis=(0,) + sp_axes)
    taps = int(np.prod(kernel))
    red_axes = (0,) + sp_axes

    if all(s == 1 for s in stride) and taps < _IM2COL_MIN_TAPS:
        grad_x, grad_w = _conv_unit_stride_backward(grad_out, xp, weight, padding, need_input_grad)
        return grad_x, grad_w, grad_b
    if taps >= _IM2COL_MIN_TAPS:
        cols = _im2col(xp, kernel, stride, out_shape)
        grad_w = np.tensordot(grad_out, cols, axes=(red_axes, tuple(range(0, 1 + nd))))
    else:
        grad_w = np.empty_like(weight)
        for offs in itertools.product(*(range(k) for k in kernel)):
            patch = xp[_tap_slices(offs, stride, out_shape)]
            grad_w[(slice(None), slice(None)) + offs] = np.tensordot(
                grad_out, patch, axes=(red_axes, red_axes)
            )

    grad_x = None
    if need_input_grad:
        gxp = np.zeros(xp.shape, dtype=np.result_type(grad_out, weight))
        for offs in itertools.product(*(range(k) for k in kernel)):
            contrib = np.tensordot(weight[(slice(None), slice(None)) + offs], grad_out, axes=([0], [1]))
            gxp[_tap_slices(offs, stride, out_shape)] += np.moveaxis(contrib, 0, 1)
        crop = (slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(padding, in_shape[2:]))
        grad_x = np.ascontiguousarray(gxp[crop])
    return grad_x, grad_w, grad_b


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    # subgradient at 0 is 0
    return grad_out * (x > 0)


def _channel_sum(x):
    # reduce over batch and spatial axes via a contiguous last-axis sum
    B, C = x.shape[:2]
    return x.reshape(B, C, -1).sum(axis=2).sum(axis=0)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training,
                      momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over batch and all spatial axes.

    In training mode ``running_mean`` / ``running_var`` are updated in place
    (unbiased batch variance, as the usual convention).
    """
    C = gamma.shape[0]
    if x.ndim < 2 or x.shape[1] != C:
        raise ShapeError(f"batchnorm: channel axis extent {x.shape[1] if x.ndim > 1 else None} != {C}")
    bshape = (1, C) + (1,) * (x.ndim - 2)
    if training:
        n = x.size // C
        mean = _channel_sum(x) / n
        xc = x - mean.reshape(bshape)
        var = _channel_sum(xc * xc) / n
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mean, var = running_mean, running_var
        xc = x - mean.reshape(bshape)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc
    xhat *= inv_std.reshape(bshape)
    out = xhat * gamma.reshape(bshape)
    out += beta.reshape(bshape)
    return out, (xhat, inv_std, gamma, training)


def batchnorm_backward(grad_out, cache):
    """Returns ``(grad_input, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma, training = cache
    C = gamma.shape[0]
    bshape = (1, C) + (1,) * (xhat.ndim - 2)
    grad_beta = _channel_sum(grad_out)
    grad_gamma = _channel_sum(grad_out * xhat)
    scale = (gamma * inv_std).reshape(bshape)
    if training:
        n = xhat.size // C
        gx = grad_out - (grad_beta / n).reshape(bshape)
        gx -= xhat * (grad_gamma / n).reshape(bshape)
        gx *= scale
    else:
        gx = grad_out * scale
    return gx, grad_gamma, grad_beta


def maxpool_forward(x, kernel, stride, padding=0):
    """Max pooling with -inf padding.

    Ties resolve to the first maximum in row-major window order; the winning
    tap index is kept for the backward pass.
    """
    nd = x.ndim - 2
    kernel = _as_tuple(kernel, nd, "kernel")
    stride = _as_tuple(stride, nd, "stride")
    padding = _as_tuple(padding, nd, "padding")
    out_shape = _window_geometry(x.shape[2:], kernel, stride, padding, "maxpool")
    xp = _pad(x, padding, value=-np.inf)
    taps = [xp[_tap_slices(offs, stride, out_shape)]
            for offs in itertools.product(*(range(k) for k in kernel))]
    stacked = np.stack(taps)
    arg = stacked.argmax(axis=0)  # argmax returns the first maximum
    out = np.take_along_axis(stacked, arg[None], axis=0)[0]
    return out, (arg, x.shape, kernel, stride, padding, out_shape)


def maxpool_backward(grad_out, cache):
    arg, in_shape, kernel, stride, padding, out_shape = cache
    if grad_out.shape != arg.shape:
        raise ShapeError(f"maxpool backward: grad_out shape {grad_out.shape} != {arg.shape}")
    padded = in_shape[:2] + tuple(n + 2 * p for n, p in zip(in_shape[2:], padding))
    gxp = np.zeros(padded, dtype=grad_out.dtype)
    for idx, offs in enumerate(itertools.product(*(range(k) for k in kernel))):
        gxp[_tap_slices(offs, stride, out_shape)] += np.where(arg == idx, grad_out, 0)
    crop = (slice(None), slice(None)) + tuple(slice(p, p + n) for p, n in zip(padding, in_shape[2:]))
    return np.ascontiguousarray(gxp[crop])


def avgpool_forward(x, kernel, stride):
    """Average pooling without padding."""
    nd = x.ndim - 2
    kernel = _as_tuple(kernel, nd, "kernel")
    stride = _as_tuple(stride, nd, "stride")
    out_shape = _window_geometry(x.shape[2:], kernel, stride, (0,) * nd, "avgpool")
    out = np.zeros(x.shape[:2] + out_shape, dtype=x.dtype)
    for offs in itertools.product(*(range(k) for k in kernel)):
        out += x[_tap_slices(offs, stride, out_shape)]
    out /= np.prod(kernel)
    return out, (x.shape, kernel, stride, out_shape)


def avgpool_backward(grad_out, cache):
    in_shape, kernel, stride, out_shape = cache
    if grad_out.shape != in_shape[:2] + out_shape:
        raise ShapeError(f"avgpool backward: grad_out shape {grad_out.shape} mismatch")
    gx = np.zeros(in_shape, dtype=grad_out.dtype)
    share = grad_out / np.prod(kernel)
    for offs in itertools.product(*(range(k) for k in kernel)):
        gx[_tap_slices(offs, stride, out_shape)] += share
    return gx


def global_avg_pool(x):
    return x.reshape(x.shape[0], x.shape[1], -1).mean(axis=2)


def global_avg_pool_backward(grad_out, in_shape):
    cells = int(np.prod(in_shape[2:]))
    g = (grad_out / cells).reshape(grad_out.shape + (1,) * (len(in_shape) - 2))
    return np.broadcast_to(g, in_shape).copy()


def linear_forward(x, weight, bias=None):
    """Affine map; weight has shape ``(out, in)``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight {weight.shape}")
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out


def linear_backward(grad_out, x, weight):
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient wrt the logits."""
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")
    labels = labels.astype(np.intp)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp = z - log_norm[:, None]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1
    grad /= n
    return float(loss), grad
