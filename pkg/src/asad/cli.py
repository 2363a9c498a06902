"""Command-line front end: ``asad {preprocess,synth,train,inflate,eval,gradcheck}``.

Settings resolve as command-line flag > ``--config`` JSON file > built-in
default, and every command writes a ``manifest.json`` with the resolved values
next to its outputs. Failures exit nonzero and print
``error: <category>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_PRECONDITION = 4
EXIT_GRADCHECK = 5
EXIT_DIVERGED = 6

DATA_ENV = "ASAD_DATA_DIR"
MODELS = ("cnn-baseline", "cnn3d", "densenet2d", "densenet3d")

DEFAULTS = {
    "seed": 0,
    "model": "densenet3d",
    "duration": 1,
    "mode": "dependent",
    "topology": None,
    "jobs": 1,
    "epochs": 50,
    "pretrain_epochs": None,
    "batch_size": 32,
    "patience": 5,
    "lr": 1e-3,
    "slices_per_window": 8,
    "eval_slices": None,
    "growth_rate": 16,
    "folds": None,
    "group_by_trial": False,
    "bootstrap": True,
}


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category, self.code = category, code


def _resolve(args, config: dict, keys) -> dict:
    out = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is None:
            value = config.get(key, DEFAULTS.get(key))
        out[key] = value
    return out


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError("format", f"config {path}: {exc}", EXIT_FORMAT) from None


def _write_manifest(out_dir: Path, command: str, resolved: dict, extra: dict | None = None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "asad_version": __version__,
        "resolved": resolved,
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _topology(path):
    from .topology import default_topology, load_topology
    return load_topology(Path(path)) if path else default_topology()


def _data_files(inputs) -> list:
    from .harness.io import SUFFIX
    if not inputs:
        root = os.environ.get(DATA_ENV)
        if not root:
            raise CliError("usage", f"no input given and ${DATA_ENV} is unset", EXIT_USAGE)
        inputs = [root]
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.glob(f"*{SUFFIX}")))
        elif p.exists():
            files.append(p)
        else:
            raise CliError("io", f"{p}: no such file or directory", EXIT_FORMAT)
    if not files:
        raise CliError("io", f"no {SUFFIX} recordings found in {', '.join(map(str, inputs))}", EXIT_FORMAT)
    return files


# -- commands --------------------------------------------------------------------

def cmd_preprocess(args) -> int:
    from .dsp import preprocess
    from .harness.io import ingest, write_recording

    config = _load_config(args.config)
    out_dir = Path(args.output)
    files = _data_files(args.inputs)
    written = []
    for f in files:
        rec = ingest(f)
        rec = rec.map_buffers(preprocess)
        written.append(str(write_recording(rec, out_dir / f"{rec.subject_id}.asad")))
        print(f"{f} -> {written[-1]} (fs 128, {len(rec.trials)} trials)")
    _write_manifest(out_dir, "preprocess", {"inputs": [str(f) for f in files], **config},
                    {"outputs": written, "chain": ["resample_to_128", "butterworth_bandpass_14_31_order8",
                                                   "zscore_per_trial_channel"]})
    return EXIT_OK


def cmd_synth(args) -> int:
    from .dsp import preprocess
    from .harness.io import write_recording
    from .harness.protocol import window_recordings
    from .harness.synthetic import SyntheticSpec, band_power_oracle, synthesize
    from .harness.windows import WindowSet

    config = _load_config(args.spec or args.config)
    spec = SyntheticSpec.from_dict(config)
    for key, attr in (("seed", "seed"), ("asymmetry", "asymmetry_ratio"), ("subjects", "n_subjects"),
                      ("trials", "trials_per_subject"), ("trial_seconds", "trial_seconds")):
        value = getattr(args, key, None)
        if value is not None:
            setattr(spec, attr, value)
    topo = _topology(args.topology)
    out_dir = Path(args.output)
    recs = synthesize(spec, topo)
    written = [str(write_recording(r, out_dir / f"{r.subject_id}.asad")) for r in recs]
    extra = {"outputs": written}
    if not args.no_self_test:
        ws = WindowSet.concat(window_recordings([r.map_buffers(preprocess) for r in recs], 1.0, topo))
        acc = band_power_oracle(ws, topo, seed=spec.seed)
        extra["oracle_accuracy_1s"] = acc
        print(f"band-power oracle accuracy (1 s windows, n={len(ws)}): {acc:.4f}")
    _write_manifest(out_dir, "synth", spec.to_dict(), extra)
    for w in written:
        print(w)
    return EXIT_OK


def _train_options(args, config):
    from .harness.protocol import ProtocolOptions
    from .harness.training import TrainConfig

    r = _resolve(args, config, DEFAULTS)
    if r["model"] not in MODELS:
        raise CliError("usage", f"--model must be one of {', '.join(MODELS)}", EXIT_USAGE)
    tc = TrainConfig(lr=r["lr"], batch_size=r["batch_size"], max_epochs=r["epochs"], patience=r["patience"],
                     slices_per_window=r["slices_per_window"], eval_slices=r["eval_slices"])
    pre = None
    if r["pretrain_epochs"] is not None:
        pre = TrainConfig(**{**tc.to_dict(), "max_epochs": r["pretrain_epochs"]})
    opts = ProtocolOptions(mode=r["mode"], model=r["model"], duration=float(r["duration"]), seed=r["seed"],
                           growth_rate=r["growth_rate"], bootstrap=r["bootstrap"], group_by_trial=r["group_by_trial"],
                           folds=r["folds"], jobs=r["jobs"], train=tc, pretrain=pre)
    return r, opts


def _load_windows(files, duration, topo):
    from .dsp import TARGET_FS
    from .harness.io import ingest
    from .harness.protocol import window_recordings

    recs = [ingest(f) for f in files]
    for f, rec in zip(files, recs):
        if rec.fs != TARGET_FS:
            raise CliError("precondition", f"{f}: fs {rec.fs} Hz; run 'asad preprocess' first", EXIT_PRECONDITION)
    return window_recordings(recs, duration, topo)


def divergence_sources(resolved: dict) -> dict:
    """Choices that have no published value and so may shift accuracy against reference runs."""
    k = resolved["growth_rate"]
    return {
        "electrode_grid_table": resolved["topology"] or "built-in 10x11 BioSemi-64 layout (asad/data)",
        "densenet_channel_widths": f"growth rate {k}, stem {2 * k}, bottleneck {4 * k}, compression 0.5",
    }


def cmd_train(args) -> int:
    from .harness.protocol import run_protocol
    from .plotting import render_report_figures

    config = _load_config(args.config)
    resolved, opts = _train_options(args, config)
    if float(resolved["duration"]) not in (1, 2, 5, 10):
        raise CliError("usage", "--duration must be one of 1, 2, 5, 10", EXIT_USAGE)
    topo = _topology(resolved["topology"])
    out_dir = Path(args.output)
    opts.checkpoint_dir = str(out_dir / "checkpoints")
    files = _data_files(args.inputs)
    windows = _load_windows(files, opts.duration, topo)
    report = run_protocol(windows, opts, topo)
    csv_path = report.write_csv(out_dir / "report.csv")
    figures = [] if args.no_plots else [str(p) for p in render_report_figures(report, csv_path)]
    summary = report.summary()
    logs = {f"{r.subject}/fold{r.fold}": {stage: [vars(e) for e in entries] for stage, entries in r.logs.items()}
            for r in report.runs}
    (out_dir / "training_log.json").write_text(json.dumps(logs, indent=1) + "\n")
    _write_manifest(out_dir, "train", {**resolved, "inputs": [str(f) for f in files], "options": opts.to_dict()},
                    {"summary": summary, "figures": figures, "divergence_sources": divergence_sources(resolved)})
    for row in report.rows:
        print(f"{row['subject']},{row['fold']},{row['model']},{row['duration_s']:g},{row['accuracy']:.4f}")
    print(f"mean accuracy {summary['mean_fold_accuracy']:.4f}; per-subject mean {summary['subject_mean']:.4f} "
          f"(SD {summary['subject_sd']:.4f}) over {summary['n_models']} models")
    return EXIT_OK


def cmd_inflate(args) -> int:
    from .models import Checkpoint, inflate_2d_to_3d

    ckpt = Checkpoint.load(args.checkpoint)
    samples = args.samples if args.samples is not None else int(round(128 * float(args.duration or 1)))
    out = inflate_2d_to_3d(ckpt, samples)
    path = out.save(args.output)
    _write_manifest(path.parent, "inflate", {"checkpoint": args.checkpoint, "samples": samples,
                                            "output": str(path)})
    print(f"{args.checkpoint} -> {path} (T={samples})")
    return EXIT_OK


def boring_input_deviation(ckpt2d, ckpt3d, n: int = 4, seed: int = 0) -> float:
    """Max |logit| difference between the 2D model on E_t and the 3D model on E_t repeated over time."""
    from .models import from_checkpoint

    m2, m3 = from_checkpoint(ckpt2d).eval(), from_checkpoint(ckpt3d).eval()
    samples = m3.config.samples
    rng = np.random.default_rng(seed)
    e = rng.standard_normal((n, 1) + m2.config.grid).astype(m2.dtype)
    e3 = np.ascontiguousarray(np.repeat(e[..., None], samples, axis=-1))
    return float(np.abs(m2(e).astype(np.float64) - m3(e3).astype(np.float64)).max())


def cmd_eval(args) -> int:
    from .harness.evaluate import evaluate
    from .harness.protocol import POOLED
    from .models import Checkpoint, from_checkpoint

    if args.boring_pair:
        c2, c3 = (Checkpoint.load(p) for p in args.boring_pair)
        dev = boring_input_deviation(c2, c3)
        print(f"max logit deviation (temporally constant input): {dev:.3e}")
        return EXIT_OK
    if not args.checkpoint:
        raise CliError("usage", "eval needs --checkpoint or --boring-pair", EXIT_USAGE)
    config = _load_config(args.config)
    r = _resolve(args, config, ("duration", "topology", "eval_slices"))
    ckpt = Checkpoint.load(args.checkpoint)
    model = from_checkpoint(ckpt)
    topo = _topology(r["topology"])
    files = _data_files(args.inputs)
    sets = _load_windows(files, float(r["duration"]), topo)
    out_dir = Path(args.output)
    from .harness.protocol import Report, RunResult
    runs = []
    for ws in sets:
        m = evaluate(model, ws, topo, r["eval_slices"])
        subject = ws.subjects[0] if len(ws) else POOLED
        runs.append(RunResult(str(subject), -1, ckpt.model_id, float(r["duration"]), m.accuracy))
        print(f"{subject}: accuracy {m.accuracy:.4f} ({m.correct}/{m.count}); "
              f"left {m.per_class[0]:.4f} right {m.per_class[1]:.4f}")
    report = Report(runs)
    report.write_csv(out_dir / "eval.csv")
    _write_manifest(out_dir, "eval", {**r, "checkpoint": args.checkpoint, "inputs": [str(f) for f in files]},
                    {"summary": report.summary()})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .nn.suite import run_suite

    seed = args.seed if args.seed is not None else 0
    results = run_suite(seed=seed, include_model=not args.layers_only)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:<32s} max rel. err {r.max_error:.2e} (tol {r.tol:.0e})")
    if failed:
        raise CliError("gradcheck", f"{len(failed)} check(s) exceeded tolerance: "
                       + ", ".join(r.name for r in failed), EXIT_GRADCHECK)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asad", description="EEG spatial-attention decoding toolkit")
    p.add_argument("--version", action="version", version=f"asad {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with default settings")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--topology", help="electrode grid table (label row col per line)")

    sp = sub.add_parser("preprocess", help="resample to 128 Hz, band-pass 14-31 Hz, z-score")
    common(sp)
    sp.add_argument("inputs", nargs="*", help=f"recordings or directories (default ${DATA_ENV})")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("synth", help="write a synthetic lateralized dataset")
    common(sp)
    sp.add_argument("--spec", help="JSON synthetic spec")
    sp.add_argument("--asymmetry", type=float)
    sp.add_argument("--subjects", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--trial-seconds", type=float)
    sp.add_argument("--no-self-test", action="store_true", help="skip the band-power oracle check")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="cross-validated training and test report")
    common(sp)
    sp.add_argument("inputs", nargs="*", help=f"preprocessed recordings or directories (default ${DATA_ENV})")
    sp.add_argument("--model", choices=MODELS)
    sp.add_argument("--duration", type=float, help="decision window in seconds (1, 2, 5, 10)")
    sp.add_argument("--mode", choices=("dependent", "independent"))
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--pretrain-epochs", type=int, help="DenseNet-2D epochs before inflation")
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--growth-rate", type=int)
    sp.add_argument("--slices-per-window", type=int)
    sp.add_argument("--eval-slices", type=int)
    sp.add_argument("--folds", type=int, nargs="+", help="run only these CV rounds (0-4)")
    sp.add_argument("--group-by-trial", action="store_true", default=None,
                    help="keep all windows of a trial in one fold")
    sp.add_argument("--no-bootstrap", dest="bootstrap", action="store_false", default=None,
                    help="train DenseNet-3D from scratch")
    sp.add_argument("--no-plots", action="store_true")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("inflate", help="DenseNet-2D checkpoint -> DenseNet-3D checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--samples", type=int, help="temporal extent T")
    sp.add_argument("--duration", type=float, help="window length in seconds (T = 128 * duration)")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_inflate)

    sp = sub.add_parser("eval", help="score a checkpoint, or compare a 2D/3D pair on constant input")
    common(sp)
    sp.add_argument("inputs", nargs="*")
    sp.add_argument("--checkpoint")
    sp.add_argument("--boring-pair", nargs=2, metavar=("CKPT2D", "CKPT3D"))
    sp.add_argument("--duration", type=float)
    sp.add_argument("--eval-slices", type=int)
    sp.add_argument("-o", "--output", default=".")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every layer and DenseNet-2D (k=4)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--layers-only", action="store_true")
    sp.set_defaults(func=cmd_gradcheck)
    return p


def _classify(exc: BaseException):
    from .dsp import PreprocessError
    from .harness.evaluate import EmptyWindowSetError
    from .harness.io import EegFormatError
    from .harness.training import TrainingDiverged
    from .models import CheckpointFormatError, InflationError
    from .nn import ShapeError
    from .topology import TopologyError

    if isinstance(exc, CliError):
        return exc.category, exc.code
    if isinstance(exc, (EegFormatError, CheckpointFormatError, TopologyError)):
        return "format", EXIT_FORMAT
    if isinstance(exc, OSError):
        return "io", EXIT_FORMAT
    if isinstance(exc, TrainingDiverged):
        return "diverged", EXIT_DIVERGED
    if isinstance(exc, PreprocessError):
        return "preprocess", EXIT_PRECONDITION
    if isinstance(exc, (ShapeError, InflationError, EmptyWindowSetError, ValueError)):
        return "precondition", EXIT_PRECONDITION
    return None, None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        category, code = _classify(exc)
        if code is None:
            raise
        print(f"error: {category}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
