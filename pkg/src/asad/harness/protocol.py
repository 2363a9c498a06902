"""Subject-dependent and subject-independent cross-validation runs and their CSV report."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..models import DenseNetConfig, build_model, from_checkpoint, inflate_2d_to_3d
from ..topology import TopologyMap, default_topology
from .evaluate import evaluate
from .training import TrainConfig, train
from .windows import N_FOLDS, WindowSet, make_folds, slice_windows

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("subject", "fold", "model", "duration_s", "accuracy")
POOLED = "all"


def derive_seed(master: int, *keys) -> int:
    """Independent 32-bit seed per (master, subject, fold, ...) via SeedSequence."""
    ints = [int(k) if isinstance(k, (int, np.integer)) else int.from_bytes(str(k).encode(), "little")
            for k in keys]
    return int(np.random.SeedSequence([int(master)] + ints).generate_state(1)[0])


@dataclass
class ProtocolOptions:
    mode: str = "dependent"
    model: str = "densenet3d"
    duration: float = 1.0
    seed: int = 0
    growth_rate: int = 16
    bootstrap: bool = True  # DenseNet-3D starts from an inflated DenseNet-2D trained on the same split
    group_by_trial: bool = False
    folds: list | None = None  # subset of CV rounds to run (None = all five)
    jobs: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrain: TrainConfig | None = None  # DenseNet-2D stage; defaults to ``train``
    checkpoint_dir: str | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k not in ("train", "pretrain")}
        d["train"] = self.train.to_dict()
        d["pretrain"] = self.pretrain.to_dict() if self.pretrain else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolOptions":
        d = dict(d)
        tr = TrainConfig.from_dict(d.pop("train", {}) or {})
        pre = d.pop("pretrain", None)
        pre = TrainConfig.from_dict(pre) if pre else None
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known}, train=tr, pretrain=pre)


@dataclass
class RunResult:
    subject: str
    fold: int
    model: str
    duration_s: float
    accuracy: float
    logs: dict = field(default_factory=dict)  # stage -> list of EpochLog
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0


@dataclass
class Report:
    runs: list = field(default_factory=list)

    @property
    def rows(self) -> list:
        return [dict(subject=r.subject, fold=r.fold, model=r.model, duration_s=r.duration_s,
                     accuracy=r.accuracy) for r in self.runs]

    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.runs]))

    def per_subject(self) -> dict:
        out = {}
        for r in self.runs:
            out.setdefault(r.subject, []).append(r.accuracy)
        return {s: float(np.mean(v)) for s, v in out.items()}

    def summary(self) -> dict:
        subj = self.per_subject()
        vals = np.array(list(subj.values()))
        return {
            "mean_fold_accuracy": self.mean_accuracy(),
            "per_subject": subj,
            "subject_mean": float(vals.mean()),
            "subject_sd": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            "n_models": len(self.runs),
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for row in self.rows:
                w.writerow([row["subject"], row["fold"], row["model"], repr(float(row["duration_s"])),
                            repr(float(row["accuracy"]))])
        return path


def read_report(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["fold"] = int(r["fold"])
        r["duration_s"] = float(r["duration_s"])
        r["accuracy"] = float(r["accuracy"])
    return rows


def window_recordings(recordings, duration: float, topo: TopologyMap | None = None) -> list:
    topo = topo or default_topology()
    return [slice_windows(rec, duration, topo) for rec in recordings]


def _model_config(model: str, opts: ProtocolOptions, samples: int, n_channels: int) -> dict:
    if model in ("densenet2d", "densenet3d"):
        cfg = DenseNetConfig(growth_rate=opts.growth_rate)
        return (cfg.as_3d(samples) if model == "densenet3d" else cfg.as_2d()).to_dict()
    if model == "cnn-baseline":
        return {"samples": samples, "n_channels": n_channels}
    return {"samples": samples}


def run_fold(windows: WindowSet, plan, k: int, subject: str, opts: ProtocolOptions,
             topo: TopologyMap | None = None) -> RunResult:
    """Train and test one CV round. DenseNet-3D with bootstrapping trains DenseNet-2D first."""
    topo = topo or default_topology()
    tr, va, te = plan.split(k)
    if np.intersect1d(te, np.union1d(tr, va)).size or np.intersect1d(tr, va).size:
        raise RuntimeError(f"fold {k}: train/val/test index sets overlap")
    train_set, val_set, test_set = windows.subset(tr), windows.subset(va), windows.subset(te)
    seed = derive_seed(opts.seed, subject, k)
    dtype = np.dtype(opts.train.dtype)
    n_ch = len(windows.channel_labels) or len(topo.labels)
    logs = {}
    tc = replace(opts.train, seed=seed)

    if opts.model == "densenet3d" and opts.bootstrap:
        pre = replace(opts.pretrain or opts.train, seed=derive_seed(opts.seed, subject, k, "2d"))
        m2 = build_model("densenet2d", _model_config("densenet2d", opts, windows.samples, n_ch), seed=pre.seed,
                         dtype=dtype)
        r2 = train(m2, train_set, val_set, pre, topo)
        logs["densenet2d"] = r2.log
        _save(opts, r2.checkpoint, subject, k, "densenet2d")
        model = from_checkpoint(inflate_2d_to_3d(r2.checkpoint, windows.samples), dtype=dtype)
    else:
        model = build_model(opts.model, _model_config(opts.model, opts, windows.samples, n_ch), seed=seed, dtype=dtype)

    result = train(model, train_set, val_set, tc, topo)
    logs[opts.model] = result.log
    _save(opts, result.checkpoint, subject, k, opts.model)
    metrics = evaluate(model, test_set, topo, tc.eval_slices)
    log.info("%s %s fold %d: accuracy %.4f", subject, opts.model, k, metrics.accuracy)
    return RunResult(subject, k, opts.model, float(opts.duration), metrics.accuracy, logs,
                     len(tr), len(va), len(te))


def _save(opts, ckpt, subject, k, model):
    if opts.checkpoint_dir:
        ckpt.save(Path(opts.checkpoint_dir) / f"{subject}_fold{k}_{model}.ckpt")


def _run_task(args):
    return run_fold(*args)


def plan_tasks(window_sets: list, opts: ProtocolOptions):
    """(windows, plan, fold, subject) tasks for the chosen mode."""
    if opts.mode == "dependent":
        groups = [(ws.subjects[0] if len(ws) else f"subject{i}", ws) for i, ws in enumerate(window_sets)]
    elif opts.mode == "independent":
        groups = [(POOLED, WindowSet.concat(window_sets))]
    else:
        raise ValueError(f"mode must be 'dependent' or 'independent', got {opts.mode!r}")
    folds = list(range(N_FOLDS)) if opts.folds is None else list(opts.folds)
    tasks = []
    for subject, ws in groups:
        plan = make_folds(len(ws), derive_seed(opts.seed, subject),
                          groups=ws.group_keys() if opts.group_by_trial else None)
        tasks.extend((ws, plan, k, str(subject)) for k in folds)
    return tasks


def run_protocol(window_sets: list, opts: ProtocolOptions, topo: TopologyMap | None = None) -> Report:
    """Cross-validate ``opts.model`` on windowed recordings (one :class:`WindowSet` per subject)."""
    topo = topo or default_topology()
    tasks = [(ws, plan, k, subject, opts, topo) for ws, plan, k, subject in plan_tasks(window_sets, opts)]
    if opts.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=opts.jobs) as pool:
            runs = list(pool.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]
    runs.sort(key=lambda r: (r.subject, r.fold))
    return Report(runs)
