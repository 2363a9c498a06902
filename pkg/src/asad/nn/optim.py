from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .core import Parameter


class Adam:
    """Adam with bias-corrected moment estimates."""

    def __init__(self, params: "OrderedDict[str, Parameter]", lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not 0 < beta1 < 1 or not 0 < beta2 < 1:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        self.params = OrderedDict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = OrderedDict((k, np.zeros_like(p.value)) for k, p in self.params.items())
        self.v = OrderedDict((k, np.zeros_like(p.value)) for k, p in self.params.items())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for k, p in self.params.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            if self.lr == 0:
                continue
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.value -= update.astype(p.value.dtype, copy=False)

    def state(self) -> dict:
        out = {f"adam.m.{k}": v for k, v in self.m.items()}
        out.update({f"adam.v.{k}": v for k, v in self.v.items()})
        return out


def adam_step(params, grads, state: Adam):
    """Functional form: write ``grads`` into the parameters and take one step."""
    for p, g in zip(params, grads):
        p.grad = np.asarray(g, dtype=p.value.dtype).copy()
    state.step()
    return params
