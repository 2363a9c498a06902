"""Decision windows and the 5-fold cross-validation plan."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..dsp import TARGET_FS
from ..topology import TopologyMap, to_grid
from .io import EegRecording

log = logging.getLogger(__name__)

DURATIONS = (1, 2, 5, 10)
N_FOLDS = 5


@dataclass
class DecisionWindow:
    grid: np.ndarray  # (H, W, T)
    label: int
    subject_id: str
    trial_id: int
    window_index: int
    duration: float


@dataclass
class WindowSet:
    """Stacked decision windows; ``grids`` has shape (N, H, W, T)."""

    grids: np.ndarray
    labels: np.ndarray
    subjects: np.ndarray
    trials: np.ndarray
    duration: float
    channel_labels: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> DecisionWindow:
        return DecisionWindow(self.grids[i], int(self.labels[i]), str(self.subjects[i]),
                              int(self.trials[i]), int(i), self.duration)

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx)
        return WindowSet(self.grids[idx], self.labels[idx], self.subjects[idx], self.trials[idx],
                         self.duration, self.channel_labels)

    @property
    def samples(self) -> int:
        return self.grids.shape[-1]

    def group_keys(self) -> np.ndarray:
        """One key per (subject, trial), for trial-grouped folds."""
        return np.array([f"{s}/{t}" for s, t in zip(self.subjects, self.trials)])

    @staticmethod
    def concat(sets) -> "WindowSet":
        sets = list(sets)
        return WindowSet(np.concatenate([s.grids for s in sets]), np.concatenate([s.labels for s in sets]),
                         np.concatenate([s.subjects for s in sets]), np.concatenate([s.trials for s in sets]),
                         sets[0].duration, sets[0].channel_labels)


def slice_windows(rec: EegRecording, duration_s: float, topo: TopologyMap, step_s: float | None = None,
                  dtype=np.float32) -> WindowSet:
    """Cut each trial into contiguous windows (non-overlapping unless ``step_s`` < duration).

    Trailing samples that do not fill a window are dropped.
    """
    if rec.fs != TARGET_FS:
        raise ValueError(f"windows are cut from {TARGET_FS} Hz data, recording is at {rec.fs} Hz")
    n = int(round(duration_s * TARGET_FS))
    step = n if step_s is None else int(round(step_s * TARGET_FS))
    grids, labels, trials = [], [], []
    for t in rec.trials:
        total = t.buffer.n_samples
        if total < n:
            log.warning("subject %s trial %s: %d samples, shorter than one %.3g s window; skipped",
                        rec.subject_id, t.trial_id, total, duration_s)
            continue
        grid = to_grid(np.asarray(t.buffer.samples, dtype=dtype), rec.channel_labels, topo)
        for start in range(0, total - n + 1, step):
            grids.append(grid[..., start:start + n])
            labels.append(t.label)
            trials.append(t.trial_id)
    shape = (0, topo.grid_height, topo.grid_width, n)
    return WindowSet(
        np.stack(grids) if grids else np.zeros(shape, dtype=dtype),
        np.asarray(labels, dtype=np.int64),
        np.array([rec.subject_id] * len(labels), dtype=object),
        np.asarray(trials, dtype=np.int64),
        duration_s,
        rec.channel_labels,
    )


@dataclass
class FoldPlan:
    seed: int
    fold_of: np.ndarray  # window index -> fold
    n_folds: int = N_FOLDS
    val_ratio: float = 0.2  # train:val = 4:1

    def test_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == k)

    def split(self, k: int):
        """``(train, val, test)`` index arrays for CV round ``k``."""
        if not 0 <= k < self.n_folds:
            raise IndexError(f"fold {k} outside 0..{self.n_folds - 1}")
        test = self.test_indices(k)
        pool = np.flatnonzero(self.fold_of != k)
        rng = np.random.default_rng([self.seed, k, 1])
        pool = pool[rng.permutation(len(pool))]
        n_val = int(round(len(pool) * self.val_ratio))
        return np.sort(pool[n_val:]), np.sort(pool[:n_val]), test

    def fold_sizes(self) -> list:
        return [int((self.fold_of == k).sum()) for k in range(self.n_folds)]


def make_folds(n_windows: int, seed: int, groups=None, n_folds: int = N_FOLDS) -> FoldPlan:
    """Seeded shuffle then round-robin assignment to folds.

    With ``groups`` (e.g. trial keys) whole groups are assigned, each to the
    currently smallest fold, so windows of one trial never straddle folds.
    """
    if n_windows < n_folds:
        raise ValueError(f"need at least {n_folds} windows for {n_folds}-fold CV, got {n_windows}")
    rng = np.random.default_rng([seed, 0])
    fold_of = np.empty(n_windows, dtype=np.int64)
    if groups is None:
        perm = rng.permutation(n_windows)
        fold_of[perm] = np.arange(n_windows) % n_folds
    else:
        groups = np.asarray(groups)
        keys = np.unique(groups)
        if len(keys) < n_folds:
            raise ValueError(f"need at least {n_folds} groups, got {len(keys)}")
        sizes = np.zeros(n_folds, dtype=np.int64)
        for key in keys[rng.permutation(len(keys))]:
            members = groups == key
            k = int(np.argmin(sizes))
            fold_of[members] = k
            sizes[k] += members.sum()
    return FoldPlan(seed, fold_of, n_folds)
