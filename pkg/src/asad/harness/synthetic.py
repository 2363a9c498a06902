"""Synthetic lateralized EEG for desk-scale checks.

Every channel carries independent 1/f noise. One band-limited (14-31 Hz)
source per trial is added to every channel with a hemisphere-dependent gain:
the hemisphere on the attended side gets ``beta_amplitude * asymmetry_ratio``,
the other hemisphere and the midline get ``beta_amplitude``. Hemispheres are
the grid columns 0-4 (left) and 6-10 (right) of the topology.
Convention: attend-left boosts the left hemisphere.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..dsp import RecordingBuffer
from ..topology import TopologyMap, default_topology
from .io import LEFT, RIGHT, EegRecording, Trial

MIDLINE_COL = 5


@dataclass
class SyntheticSpec:
    n_subjects: int = 2
    trials_per_subject: int = 8
    trial_seconds: float = 180.0
    fs: int = 256
    noise_exponent: float = 1.0
    beta_band: tuple = (14.0, 31.0)
    beta_amplitude: float = 0.2
    asymmetry_ratio: float = 1.5
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_band"] = list(self.beta_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "beta_band" in d:
            d["beta_band"] = tuple(d["beta_band"])
        return cls(**d)


def hemisphere_masks(topo: TopologyMap, labels=None):
    """Boolean (left, right) channel masks in ``labels`` order (default: table order)."""
    labels = topo.labels if labels is None else labels
    cols = np.array([topo.entries[l][1] for l in labels])
    return cols < MIDLINE_COL, cols > MIDLINE_COL


def _colored_noise(rng, shape, exponent, fs):
    n = shape[-1]
    spec = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    scale = np.zeros_like(f)
    scale[1:] = f[1:] ** (-exponent / 2.0)
    x = np.fft.irfft(spec * scale, n=n, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def _band_source(rng, n, band, fs):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(f < band[0]) | (f > band[1])] = 0.0
    x = np.fft.irfft(spec, n=n)
    return x / x.std()


def synthesize(spec: SyntheticSpec, topo: TopologyMap | None = None) -> list:
    topo = topo or default_topology()
    labels = topo.labels
    left, right = hemisphere_masks(topo, labels)
    n = int(round(spec.trial_seconds * spec.fs))
    recordings = []
    for s in range(spec.n_subjects):
        rng = np.random.default_rng([spec.seed, s])
        trial_labels = np.array([LEFT, RIGHT] * (spec.trials_per_subject // 2)
                                + [LEFT] * (spec.trials_per_subject % 2))
        trial_labels = trial_labels[rng.permutation(len(trial_labels))]
        trials = []
        for t, label in enumerate(trial_labels):
            noise = _colored_noise(rng, (len(labels), n), spec.noise_exponent, spec.fs)
            source = _band_source(rng, n, spec.beta_band, spec.fs)
            gain = np.full(len(labels), spec.beta_amplitude)
            boosted = left if label == LEFT else right
            gain[boosted] *= spec.asymmetry_ratio
            x = noise + gain[:, None] * source[None, :]
            trials.append(Trial(RecordingBuffer(x.astype(np.float32), spec.fs, list(labels)), int(label), t))
        recordings.append(EegRecording(f"S{s + 1:02d}", trials))
    return recordings


def band_power_features(ws, topo: TopologyMap | None = None) -> np.ndarray:
    """log(left / right) power of the hemisphere-averaged (band-passed) signal, per window."""
    from ..topology import from_grid
    topo = topo or default_topology()
    labels = ws.channel_labels or topo.labels
    x = from_grid(ws.grids, labels, topo).astype(np.float64)  # N, C, T
    left, right = hemisphere_masks(topo, labels)
    pl = x[:, left].mean(axis=1).var(axis=-1)
    pr = x[:, right].mean(axis=1).var(axis=-1)
    return np.log(pl + 1e-12) - np.log(pr + 1e-12)


def fit_logistic(x: np.ndarray, y: np.ndarray, iters: int = 50, ridge: float = 1e-6):
    """Newton-Raphson logistic regression with intercept; returns the weight vector."""
    X = np.column_stack([np.ones(len(x)), np.asarray(x, dtype=np.float64).reshape(len(x), -1)])
    w = np.zeros(X.shape[1])
    for _ in range(iters):
        p = 1 / (1 + np.exp(-np.clip(X @ w, -50, 50)))
        H = X.T @ (X * (p * (1 - p))[:, None]) + ridge * np.eye(X.shape[1])
        step = np.linalg.solve(H, X.T @ (y - p) - ridge * w)
        w += step
        if np.abs(step).max() < 1e-10:
            break
    return w


def band_power_oracle(ws, topo: TopologyMap | None = None, seed: int = 0) -> float:
    """Held-out accuracy of a logistic classifier on the hemispheric beta-power contrast."""
    feats = band_power_features(ws, topo)
    y = ws.labels.astype(np.float64)
    idx = np.random.default_rng(seed).permutation(len(y))
    half = len(y) // 2
    tr, te = idx[:half], idx[half:]
    w = fit_logistic(feats[tr], y[tr])
    pred = (w[0] + w[1] * feats[te]) > 0
    return float((pred == (y[te] > 0.5)).mean())
