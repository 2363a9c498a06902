"""Minimal numpy tensor ops with hand-written reverse-mode gradients."""
from .core import Module, Parameter, Sequential
from .functional import ShapeError, out_extent, softmax, softmax_cross_entropy
from .gradcheck import GradcheckReport, gradcheck, relative_error
from .layers import (AvgPool, AxisMean, BatchNorm, Conv, Flatten, GlobalAvgPool,
                     Linear, MaxPool, ReLU)
from .optim import Adam, adam_step

__all__ = [
    "Adam", "AvgPool", "AxisMean", "BatchNorm", "Conv", "Flatten", "GlobalAvgPool",
    "GradcheckReport", "Linear", "MaxPool", "Module", "Parameter", "ReLU", "Sequential",
    "ShapeError", "adam_step", "gradcheck", "out_extent", "relative_error", "softmax",
    "softmax_cross_entropy",
]
