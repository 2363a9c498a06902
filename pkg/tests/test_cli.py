import json
import subprocess
import sys

import numpy as np
import pytest

from asad.cli import EXIT_FORMAT, EXIT_PRECONDITION, EXIT_USAGE, main
from asad.dsp import RecordingBuffer
from asad.harness.io import EegRecording, Trial, ingest, write_recording
from asad.models import Checkpoint, DenseNetConfig, build_densenet2d, build_model, to_checkpoint


def _run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    code = main(["synth", "-o", str(d), "--subjects", "2", "--trials", "2", "--trial-seconds", "12",
                 "--no-self-test"])
    assert code == 0
    return d


@pytest.fixture(scope="module")
def prep_dir(synth_dir, tmp_path_factory):
    d = tmp_path_factory.mktemp("prep")
    assert main(["preprocess", str(synth_dir), "-o", str(d)]) == 0
    return d


def test_synth_writes_loadable_files_and_manifest(synth_dir):
    files = sorted(synth_dir.glob("*.asad"))
    assert [f.name for f in files] == ["S01.asad", "S02.asad"]
    rec = ingest(files[0])
    assert rec.fs == 256 and len(rec.trials) == 2
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["resolved"]["asymmetry_ratio"] == 1.5 and manifest["resolved"]["trials_per_subject"] == 2


def test_synth_is_reproducible(synth_dir, tmp_path):
    assert main(["synth", "-o", str(tmp_path), "--subjects", "2", "--trials", "2", "--trial-seconds", "12",
                 "--no-self-test"]) == 0
    for name in ("S01.asad", "S02.asad"):
        assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()


def test_synth_self_test_at_no_asymmetry(tmp_path, capsys):
    code, out, _ = _run(["synth", "-o", tmp_path, "--subjects", "1", "--trials", "4", "--trial-seconds", "120",
                         "--asymmetry", "1.0"], capsys)
    assert code == 0
    acc = json.loads((tmp_path / "manifest.json").read_text())["oracle_accuracy_1s"]
    n_test = 480 - 240
    assert abs(acc - 0.5) <= 3 * 0.5 / np.sqrt(n_test)
    assert "oracle accuracy" in out


def test_preprocess_outputs_128_hz_and_is_idempotent(synth_dir, prep_dir, tmp_path):
    rec = ingest(prep_dir / "S01.asad")
    assert rec.fs == 128 and rec.trials[0].buffer.n_samples == 12 * 128
    assert main(["preprocess", str(synth_dir), "-o", str(tmp_path)]) == 0
    assert (tmp_path / "S01.asad").read_bytes() == (prep_dir / "S01.asad").read_bytes()


def test_preprocess_rejects_low_rate(tmp_path, capsys):
    rec = EegRecording("low", [Trial(RecordingBuffer(np.zeros((2, 300), np.float32), 100, ["a", "b"]), 0, 0)])
    write_recording(rec, tmp_path / "low.asad")
    code, _, err = _run(["preprocess", tmp_path / "low.asad", "-o", tmp_path / "out"], capsys)
    assert code == EXIT_PRECONDITION and err.startswith("error: preprocess:")


def test_truncated_input_is_a_format_error(tmp_path, capsys):
    bad = tmp_path / "bad.asad"
    bad.write_bytes(b"ASADEEG1" + b"\x01\x00")
    code, _, err = _run(["preprocess", bad, "-o", tmp_path / "out"], capsys)
    assert code == EXIT_FORMAT and "error: format:" in err and "bytes" in err


def test_missing_input_is_an_io_error(tmp_path, capsys):
    code, _, err = _run(["preprocess", tmp_path / "nope.asad", "-o", tmp_path], capsys)
    assert code == EXIT_FORMAT and err.startswith("error: io:")


def test_unknown_model_is_usage_error(capsys):
    assert main(["train", "--model", "resnet", "-o", "x"]) == EXIT_USAGE


def test_train_on_raw_rate_data_is_refused(synth_dir, tmp_path, capsys):
    code, _, err = _run(["train", synth_dir, "--model", "cnn3d", "-o", tmp_path], capsys)
    assert code == EXIT_PRECONDITION and "preprocess" in err


def test_train_epochs_zero_checkpoint_equals_init(prep_dir, tmp_path, capsys):
    code, out, _ = _run(["train", prep_dir, "--model", "cnn-baseline", "--epochs", "0", "--folds", "0",
                         "--seed", "3", "-o", tmp_path], capsys)
    assert code == 0
    ck = Checkpoint.load(tmp_path / "checkpoints" / "S01_fold0_cnn-baseline.ckpt")
    from asad.harness.protocol import derive_seed
    init = build_model("cnn-baseline", {"samples": 128, "n_channels": 64}, seed=derive_seed(3, "S01", 0))
    for k, v in init.state_dict().items():
        np.testing.assert_array_equal(ck.tensors[k], v)
    assert (tmp_path / "report.csv").read_text().startswith("subject,fold,model,duration_s,accuracy\n")
    assert (tmp_path / "report_folds.png").stat().st_size > 0
    assert (tmp_path / "report_curves.png").stat().st_size > 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["resolved"]["epochs"] == 0 and manifest["resolved"]["seed"] == 3
    assert manifest["resolved"]["lr"] == 1e-3
    assert set(manifest["divergence_sources"]) == {"electrode_grid_table", "densenet_channel_widths"}


def test_config_file_precedence(prep_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "cnn3d", "epochs": 1, "batch_size": 64, "folds": [2]}))
    out = tmp_path / "out"
    assert main(["train", str(prep_dir), "--config", str(cfg), "--batch-size", "16", "-o", str(out),
                 "--no-plots"]) == 0
    r = json.loads((out / "manifest.json").read_text())["resolved"]
    assert (r["model"], r["epochs"], r["batch_size"], r["folds"]) == ("cnn3d", 1, 16, [2])
    assert r["mode"] == "dependent"


def test_train_is_byte_reproducible(prep_dir, tmp_path):
    for name in ("a", "b"):
        assert main(["train", str(prep_dir), "--model", "cnn3d", "--epochs", "1", "--folds", "1",
                     "-o", str(tmp_path / name), "--no-plots"]) == 0
    for rel in ("report.csv", "checkpoints/S01_fold1_cnn3d.ckpt", "checkpoints/S02_fold1_cnn3d.ckpt",
                "training_log.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_data_dir_environment_variable(prep_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("ASAD_DATA_DIR", str(prep_dir))
    assert main(["train", "--model", "cnn3d", "--epochs", "1", "--folds", "0", "--mode", "independent",
                 "-o", str(tmp_path), "--no-plots"]) == 0
    assert "all,0,cnn3d" in (tmp_path / "report.csv").read_text()


def test_no_data_anywhere_is_usage_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ASAD_DATA_DIR", raising=False)
    code, _, err = _run(["train", "--model", "cnn3d", "-o", tmp_path], capsys)
    assert code == EXIT_USAGE and "ASAD_DATA_DIR" in err


def test_inflate_and_boring_pair(tmp_path, capsys):
    net = build_densenet2d(DenseNetConfig(growth_rate=4), seed=2)
    p2 = to_checkpoint(net, seed=2).save(tmp_path / "m2.ckpt")
    code, _, _ = _run(["inflate", p2, "--duration", "1", "-o", tmp_path / "m3.ckpt"], capsys)
    assert code == 0
    ck3 = Checkpoint.load(tmp_path / "m3.ckpt")
    assert ck3.model_id == "densenet3d" and ck3.config["samples"] == 128
    code, out, _ = _run(["eval", "--boring-pair", p2, tmp_path / "m3.ckpt"], capsys)
    assert code == 0
    dev = float(out.strip().split()[-1])
    assert dev <= 1e-5


def test_inflate_rejects_too_short_window(tmp_path, capsys):
    p2 = to_checkpoint(build_densenet2d(DenseNetConfig(growth_rate=4))).save(tmp_path / "m2.ckpt")
    code, _, err = _run(["inflate", p2, "--samples", "43", "-o", tmp_path / "m3.ckpt"], capsys)
    assert code == EXIT_PRECONDITION and "trans2" in err


def test_eval_checkpoint_on_data(prep_dir, tmp_path, capsys):
    from asad.models import build_cnn3d
    p = to_checkpoint(build_cnn3d(128)).save(tmp_path / "c.ckpt")
    code, out, _ = _run(["eval", prep_dir, "--checkpoint", p, "-o", tmp_path], capsys)
    assert code == 0 and "S01: accuracy" in out
    assert (tmp_path / "eval.csv").exists()


def test_gradcheck_layers_pass(capsys):
    code, out, _ = _run(["gradcheck", "--layers-only"], capsys)
    assert code == 0 and "FAIL" not in out and out.count("PASS") >= 13


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "asad.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "asad" in res.stdout
