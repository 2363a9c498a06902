"""The standard gradient-check battery: every layer type plus a reduced DenseNet-2D."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Sequential
from .gradcheck import gradcheck
from .layers import AvgPool, BatchNorm, Conv, Flatten, GlobalAvgPool, Linear, MaxPool, ReLU

LAYER_TOL = 1e-5
MODEL_TOL = 1e-4


@dataclass
class SuiteResult:
    name: str
    max_error: float
    tol: float
    details: dict

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def _away_from_zero(rng, shape, margin=1e-3):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * (margin + np.abs(x)), x)


def layer_cases(seed: int = 0):
    """(name, module, input, labels, tol) tuples, all float64."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    cases = [
        ("conv2d 3x3 pad 1", Conv(3, 4, (3, 3), padding=1, bias=True, rng=rng, dtype=f64),
         rng.standard_normal((2, 3, 5, 6)), None, 1e-6),
        ("conv2d 3x3 stride 2", Conv(2, 3, (3, 3), stride=2, padding=1, bias=True, rng=rng, dtype=f64),
         rng.standard_normal((2, 2, 7, 6)), None, 1e-6),
        ("conv3d 3x3x1", Conv(2, 3, (3, 3, 1), padding=(1, 1, 0), rng=rng, dtype=f64),
         rng.standard_normal((2, 2, 4, 5, 6)), None, 1e-6),
        ("conv3d 2x2x3 stride (1,2,2)", Conv(2, 2, (2, 2, 3), stride=(1, 2, 2), bias=True, rng=rng, dtype=f64),
         rng.standard_normal((1, 2, 4, 5, 7)), None, 1e-6),
        ("batchnorm (training)", BatchNorm(3, dtype=f64), rng.standard_normal((4, 3, 3, 4)), None, 1e-5),
        ("relu", ReLU(), _away_from_zero(rng, (3, 4, 5)), None, 1e-6),
        ("maxpool 3x3 s2 p1", MaxPool((3, 3), 2, 1), rng.standard_normal((2, 2, 6, 7)), None, 1e-6),
        ("maxpool 3x3x1 s(2,2,1)", MaxPool((3, 3, 1), (2, 2, 1), (1, 1, 0)), rng.standard_normal((1, 2, 5, 6, 3)),
         None, 1e-6),
        ("avgpool 2x2 s1", AvgPool((2, 2), 1), rng.standard_normal((2, 2, 4, 5)), None, 1e-6),
        ("avgpool 2x2x7 s(1,1,3)", AvgPool((2, 2, 7), (1, 1, 3)), rng.standard_normal((1, 2, 3, 4, 13)), None, 1e-6),
        ("global average pool", GlobalAvgPool(), rng.standard_normal((2, 3, 4, 5)), None, 1e-6),
        ("linear", Linear(6, 3, rng=rng, dtype=f64), rng.standard_normal((4, 6)), None, 1e-7),
        ("softmax cross-entropy head", Sequential(Flatten(), Linear(12, 2, rng=rng, dtype=f64)),
         rng.standard_normal((5, 3, 4)), rng.integers(0, 2, 5), 1e-6),
    ]
    return cases


def run_suite(seed: int = 0, include_model: bool = True, samples: int = 10) -> list:
    from ..models.densenet import CompositeLayer, DenseNetConfig, _geom, build_densenet2d

    results = []
    for name, module, x, labels, tol in layer_cases(seed):
        rep = gradcheck(module, x, labels=labels, samples=samples, seed=seed)
        results.append(SuiteResult(name, rep.max_error, tol, rep.errors))

    rng = np.random.default_rng(seed + 1)
    comp = CompositeLayer(6, 8, 4, _geom(2), rng, np.float64)
    rep = gradcheck(comp, rng.standard_normal((3, 6, 5, 6)), samples=samples, seed=seed)
    results.append(SuiteResult("dense-block composite layer", rep.max_error, LAYER_TOL, rep.errors))

    if include_model:
        net = build_densenet2d(DenseNetConfig(growth_rate=4), seed=seed, dtype=np.float64)
        x = rng.standard_normal((4, 1, 10, 11))
        rep = gradcheck(net, x, labels=np.array([0, 1, 1, 0]), samples=samples, seed=seed)
        results.append(SuiteResult("densenet2d k=4", rep.max_error, MODEL_TOL, rep.errors))
    return results
