"""Mini-batch training with early stopping on validation loss."""
from __future__ import annotations

import copy
import logging
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..models import model_id_of, to_checkpoint
from ..nn import Adam, softmax_cross_entropy
from ..topology import TopologyMap, default_topology, from_grid

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    slices_per_window: int = 8  # DenseNet-2D: time slices drawn per training window per epoch
    eval_slices: int | None = None  # DenseNet-2D: evenly spaced slices averaged per window (None = all)
    dtype: str = "float32"
    dump_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainResult:
    checkpoint: object
    log: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


# -- input adapters -----------------------------------------------------------

def model_input(model_id: str, grids: np.ndarray, topo: TopologyMap | None = None,
                labels=None, dtype=np.float32) -> np.ndarray:
    """Window grids (N, H, W, T) -> the tensor layout a window-level model consumes."""
    if model_id == "cnn-baseline":
        topo = topo or default_topology()
        x = from_grid(grids, labels or topo.labels, topo)  # N, C, T
        return np.ascontiguousarray(x[:, None], dtype=dtype)
    if model_id in ("cnn3d", "densenet3d"):
        return np.ascontiguousarray(grids[:, None], dtype=dtype)
    raise ValueError(f"{model_id!r} does not take whole windows")


def slice_indices(samples: int, count: int | None) -> np.ndarray:
    """Evenly spaced time indices used to score a window with a 2D model."""
    if count is None or count >= samples:
        return np.arange(samples)
    return np.unique(np.linspace(0, samples - 1, count).round().astype(np.int64))


def predict_logits(model, grids: np.ndarray, topo: TopologyMap | None = None, labels=None,
                   eval_slices: int | None = None, batch_size: int = 32) -> np.ndarray:
    """Window-level logits in evaluation mode. DenseNet-2D averages logits over time slices."""
    model.eval()
    model_id = model_id_of(model)
    dtype = model.dtype
    out = []
    for start in range(0, len(grids), batch_size):
        g = grids[start:start + batch_size]
        if model_id == "densenet2d":
            t = slice_indices(g.shape[-1], eval_slices)
            x = np.moveaxis(g[..., t], -1, 1)  # n, S, H, W
            n, s = x.shape[:2]
            flat = np.ascontiguousarray(x.reshape(n * s, 1, *x.shape[2:]), dtype=dtype)
            logits = np.concatenate([model(flat[i:i + 4096]) for i in range(0, len(flat), 4096)])
            out.append(logits.reshape(n, s, -1).mean(axis=1))
        else:
            out.append(model(model_input(model_id, g, topo, labels, dtype)))
    if not out:
        return np.zeros((0, 2), dtype=dtype)
    return np.concatenate(out)


def _training_items(model_id, grids, labels, rng, slices_per_window):
    """Per-epoch (index, time) items; time is -1 for whole-window models."""
    n = len(labels)
    if model_id == "densenet2d":
        t = rng.integers(0, grids.shape[-1], size=(n, slices_per_window))
        w = np.repeat(np.arange(n), slices_per_window)
        return w, t.reshape(-1)
    return np.arange(n), np.full(n, -1)


def _batch(model_id, grids, w, t, topo, labels, dtype):
    if model_id == "densenet2d":
        return np.ascontiguousarray(grids[w, :, :, t][:, None], dtype=dtype)
    return model_input(model_id, grids[w], topo, labels, dtype)


# -- the loop -------------------------------------------------------------------

def _state_copy(model, opt):
    return copy.deepcopy(model.state_dict()), copy.deepcopy(opt.state()), opt.step_count


def _dump(model, opt, config, epoch, step):
    root = Path(config.dump_dir) if config.dump_dir else Path(tempfile.mkdtemp(prefix="asad-diverged-"))
    root.mkdir(parents=True, exist_ok=True)
    path = root / f"diverged_epoch{epoch}_step{step}.ckpt"
    to_checkpoint(model, seed=config.seed, metadata={"epoch": epoch, "step": step}, optimizer=opt).save(path)
    return path


def _val_metrics(model, val_grids, val_labels, topo, channel_labels, config):
    if len(val_labels) == 0:
        return float("nan"), float("nan")
    logits = predict_logits(model, val_grids, topo, channel_labels, config.eval_slices)
    loss, _ = softmax_cross_entropy(logits.astype(np.float64), val_labels)
    acc = float((logits.argmax(axis=1) == val_labels).mean())
    return float(loss), acc


def train(model, train_set, val_set, config: TrainConfig | None = None, topo: TopologyMap | None = None,
          progress=None) -> TrainResult:
    """Train ``model`` in place; return the best-validation checkpoint and the per-epoch log.

    ``train_set`` / ``val_set`` are :class:`WindowSet` objects. The checkpoint
    also carries the Adam moments at the best epoch.
    """
    config = config or TrainConfig()
    topo = topo or default_topology()
    model_id = model_id_of(model)
    dtype = model.dtype
    channel_labels = train_set.channel_labels or None
    opt = Adam(model.parameters(), lr=config.lr)
    best_state = _state_copy(model, opt)
    best_loss, best_epoch, since_best = np.inf, 0, 0
    history = []
    stopped = False

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        rng = np.random.default_rng([config.seed, epoch])
        w, t = _training_items(model_id, train_set.grids, train_set.labels, rng, config.slices_per_window)
        order = rng.permutation(len(w))
        total, count = 0.0, 0
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            sel = order[start:start + config.batch_size]
            x = _batch(model_id, train_set.grids, w[sel], t[sel], topo, channel_labels, dtype)
            y = train_set.labels[w[sel]]
            opt.zero_grad()
            logits = model(x)
            loss, grad = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                path = _dump(model, opt, config, epoch, step)
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}; state dumped to {path}", path)
            model.backward(grad.astype(dtype, copy=False))
            opt.step()
            total += float(loss) * len(sel)
            count += len(sel)
        val_loss, val_acc = _val_metrics(model, val_set.grids, val_set.labels, topo, channel_labels, config)
        entry = EpochLog(epoch, total / max(count, 1), val_loss, val_acc)
        history.append(entry)
        log.info("%s epoch %d: train %.4f val %.4f acc %.4f", model_id, epoch, entry.train_loss, val_loss, val_acc)
        if progress:
            progress(entry)
        if val_loss < best_loss or not np.isfinite(best_loss):
            best_loss, best_epoch, since_best = val_loss, epoch, 0
            best_state = _state_copy(model, opt)
        else:
            since_best += 1
            if since_best >= config.patience:
                stopped = True
                break

    state, opt_state, step_count = best_state
    model.load_state_dict(state)
    model.eval()
    opt.step_count = step_count
    meta = {"best_epoch": best_epoch, "epochs_run": len(history), "train": config.to_dict()}
    ckpt = to_checkpoint(model, seed=config.seed, metadata=meta)
    ckpt.optimizer.update(opt_state)
    ckpt.metadata["adam_step"] = step_count
    return TrainResult(ckpt, history, best_epoch, stopped)
