"""Parameters, modules and the reverse-mode plumbing shared by all layers."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np


class Parameter:
    """A trainable array with an accumulated gradient of the same shape."""

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"


class Module:
    """Layer base class.

    Subclasses implement ``forward`` (caching whatever the backward pass
    needs), ``backward`` (returning the input gradient and accumulating into
    ``Parameter.grad``) and ``output_shape`` (per-sample shape inference,
    batch axis excluded). Child modules and parameters assigned as attributes
    are registered in assignment order, which fixes parameter naming.
    """

    def __init__(self):
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, Parameter):
            self._params[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = None
        object.__setattr__(self, name, value)

    # -- traversal -------------------------------------------------------
    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def parameters(self) -> "OrderedDict[str, Parameter]":
        out = OrderedDict()
        for mname, mod in self.named_modules():
            for pname, p in mod._params.items():
                full = f"{mname}.{pname}" if mname else pname
                p.name = full
                out[full] = p
        return out

    def buffers(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for mname, mod in self.named_modules():
            for bname in mod._buffers:
                out[f"{mname}.{bname}" if mname else bname] = getattr(mod, bname)
        return out

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((k, p.value.copy()) for k, p in self.parameters().items())
        state.update((k, v.copy()) for k, v in self.buffers().items())
        return state

    def load_state_dict(self, state, strict: bool = True):
        params = self.parameters()
        owners = {}
        for mname, mod in self.named_modules():
            for bname in mod._buffers:
                owners[f"{mname}.{bname}" if mname else bname] = (mod, bname)
        missing = [k for k in list(params) + list(owners) if k not in state]
        unexpected = [k for k in state if k not in params and k not in owners]
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for k, p in params.items():
            if k in state:
                v = np.asarray(state[k])
                if v.shape != p.value.shape:
                    raise ValueError(f"{k}: shape {v.shape} != {p.value.shape}")
                p.value = v.astype(p.value.dtype, copy=True)
                p.zero_grad()
        for k, (mod, bname) in owners.items():
            if k in state:
                cur = getattr(mod, bname)
                object.__setattr__(mod, bname, np.asarray(state[k]).astype(cur.dtype, copy=True))

    def astype(self, dtype) -> "Module":
        for p in self.parameters().values():
            p.value = p.value.astype(dtype)
            p.zero_grad()
        for mname, mod in self.named_modules():
            for bname in mod._buffers:
                object.__setattr__(mod, bname, getattr(mod, bname).astype(dtype))
        return self

    @property
    def dtype(self):
        for p in self.parameters().values():
            return p.value.dtype
        return np.dtype(np.float64)

    # -- modes -----------------------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        for _, mod in self.named_modules():
            object.__setattr__(mod, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    # -- computation -----------------------------------------------------
    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def __call__(self, x):
        return self.forward(x)

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters().values())


class Sequential(Module):
    """Runs children in order; backward visits them in reverse."""

    def __init__(self, *layers, names=None):
        super().__init__()
        names = names or [str(i) for i in range(len(layers))]
        for name, layer in zip(names, layers):
            setattr(self, name, layer)

    @property
    def layers(self):
        return list(self._modules.values())

    def forward(self, x):
        for layer in self._modules.values():
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self._modules.values()):
            grad = layer.backward(grad)
            if grad is None:
                break
        return grad

    def output_shape(self, shape):
        for layer in self._modules.values():
            shape = layer.output_shape(shape)
        return shape

    def trace(self, shape, prefix=""):
        """Per-layer output shapes, as ``[(name, shape), ...]``."""
        out = []
        for name, layer in self._modules.items():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(layer, Sequential):
                sub = layer.trace(shape, full)
                out.extend(sub)
                shape = sub[-1][1] if sub else shape
            else:
                shape = layer.output_shape(shape)
                out.append((full, shape))
        return out
