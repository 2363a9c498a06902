"""Central finite-difference verification of module gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Module


@dataclass
class GradcheckReport:
    errors: dict = field(default_factory=dict)  # tensor name -> relative error
    samples: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def passed(self, tol: float) -> bool:
        return self.max_error <= tol

    def lines(self):
        for name, err in self.errors.items():
            yield f"{name:<48s} {err:.3e}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest absolute deviation scaled by the largest gradient magnitude in the sample.

    Scaling per tensor (rather than per coordinate) keeps individually tiny
    coordinates from dominating through finite-difference round-off.
    """
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def gradcheck(module: Module, x: np.ndarray, labels=None, step: float = 1e-6,
              samples: int = 10, seed: int = 0, check_input: bool = True) -> GradcheckReport:
    """Compare backprop gradients with central differences.

    The objective is the softmax cross-entropy against ``labels`` when given,
    otherwise a fixed random projection of the output. ``samples`` random
    coordinates are checked in every parameter tensor (all of them when the
    tensor is smaller). Requires float64 parameters and input.
    """
    from .functional import softmax_cross_entropy

    if module.dtype != np.float64 or x.dtype != np.float64:
        raise TypeError("gradcheck requires float64 parameters and input")
    rng = np.random.default_rng(seed)
    out_shape = module.forward(x).shape
    proj = rng.standard_normal(out_shape)

    def objective(inp):
        out = module.forward(inp)
        if labels is not None:
            return softmax_cross_entropy(out, labels)
        return float((out * proj).sum()), proj

    module.zero_grad()
    _, g_out = objective(x)
    g_in = module.backward(g_out)
    params = module.parameters()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradcheckReport(samples=samples)
    targets = [(name, p.value) for name, p in params.items()]
    if check_input and g_in is not None:
        targets.append(("input", x))
        analytic["input"] = g_in
    for name, arr in targets:
        n = arr.size
        idx = np.arange(n) if n <= samples else rng.choice(n, size=samples, replace=False)
        num = np.empty(len(idx))
        flat = arr.reshape(-1)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            fp, _ = objective(x)
            flat[i] = orig - step
            fm, _ = objective(x)
            flat[i] = orig
            num[j] = (fp - fm) / (2 * step)
        report.errors[name] = relative_error(analytic[name].reshape(-1)[idx], num)
    return report
