"""Window-level decision metrics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..models import from_checkpoint
from .training import predict_logits


class EmptyWindowSetError(ValueError):
    pass


@dataclass
class Metrics:
    accuracy: float
    correct: int
    count: int
    per_class: dict = field(default_factory=dict)  # label -> accuracy (NaN when absent)
    per_subject: dict = field(default_factory=dict)  # subject -> accuracy
    subject_mean: float = float("nan")
    subject_sd: float = float("nan")


def decision_metrics(predictions, labels, subjects=None) -> Metrics:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise EmptyWindowSetError("cannot evaluate an empty window set")
    hit = predictions == labels
    correct = int(hit.sum())
    per_class = {}
    for c in (0, 1):
        m = labels == c
        per_class[c] = float(hit[m].mean()) if m.any() else float("nan")
    per_subject = {}
    if subjects is not None:
        subjects = np.asarray(subjects)
        for s in sorted(set(subjects.tolist())):
            per_subject[s] = float(hit[subjects == s].mean())
    accs = np.array(list(per_subject.values()))
    mean = float(accs.mean()) if len(accs) else float("nan")
    sd = float(accs.std(ddof=1)) if len(accs) > 1 else float("nan")
    return Metrics(correct / len(labels), correct, len(labels), per_class, per_subject, mean, sd)


def evaluate(model_or_checkpoint, windows, topo=None, eval_slices=None) -> Metrics:
    """Argmax decision per window; accepts a model or a checkpoint."""
    if len(windows) == 0:
        raise EmptyWindowSetError("cannot evaluate an empty window set")
    model = model_or_checkpoint
    if not hasattr(model, "forward"):
        model = from_checkpoint(model_or_checkpoint)
    logits = predict_logits(model, windows.grids, topo, windows.channel_labels or None, eval_slices)
    return decision_metrics(logits.argmax(axis=1), windows.labels, windows.subjects)
