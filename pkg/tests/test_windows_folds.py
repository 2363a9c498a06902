import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asad.dsp import RecordingBuffer
from asad.harness.io import EegRecording, Trial
from asad.harness.windows import WindowSet, make_folds, slice_windows
from asad.topology import default_topology

TOPO = default_topology()


def _recording(seconds_per_trial, fs=128, subject="S1", seed=0):
    r = np.random.default_rng(seed)
    trials = [Trial(RecordingBuffer(r.standard_normal((64, int(s * fs))).astype(np.float32), fs, TOPO.labels),
                    i % 2, i) for i, s in enumerate(seconds_per_trial)]
    return EegRecording(subject, trials)


def test_exact_division_discards_nothing():
    ws = slice_windows(_recording([130]), 10, TOPO)
    assert len(ws) == 13 and ws.grids.shape == (13, 10, 11, 1280)
    assert ws.samples == 128 * 10


def test_remainder_is_discarded():
    rec = _recording([130])
    ws = slice_windows(rec, 60, TOPO)
    assert len(ws) == 2
    x = rec.trials[0].buffer.samples
    rows, cols = TOPO.cells()
    np.testing.assert_array_equal(ws.grids[1][rows, cols], x[:, 60 * 128:120 * 128])


def test_windows_are_contiguous_and_labelled():
    rec = _recording([5, 3])
    ws = slice_windows(rec, 1, TOPO)
    assert len(ws) == 8
    assert list(ws.labels) == [0] * 5 + [1] * 3
    assert list(ws.trials) == [0] * 5 + [1] * 3
    rows, cols = TOPO.cells()
    joined = np.concatenate([ws.grids[i][rows, cols] for i in range(5)], axis=1)
    np.testing.assert_array_equal(joined, rec.trials[0].buffer.samples)
    w = ws[6]
    assert (w.label, w.trial_id, w.subject_id, w.duration) == (1, 1, "S1", 1)


def test_short_trial_contributes_nothing(caplog):
    with caplog.at_level(logging.WARNING):
        ws = slice_windows(_recording([0.5, 2]), 1, TOPO)
    assert len(ws) == 2 and "shorter than one" in caplog.text


def test_requires_128_hz():
    with pytest.raises(ValueError):
        slice_windows(_recording([2], fs=256), 1, TOPO)


def test_48_minutes_of_one_second_windows():
    n = 48 * 60
    plan = make_folds(n, seed=0)
    assert plan.fold_sizes() == [576] * 5


def test_pooled_two_subjects_fold_size():
    plan = make_folds(2 * 2880, seed=3)
    assert plan.fold_sizes() == [1152] * 5


def test_seven_windows():
    assert sorted(make_folds(7, seed=1).fold_sizes(), reverse=True) == [2, 2, 1, 1, 1]


def test_too_few_windows():
    with pytest.raises(ValueError):
        make_folds(4, seed=0)


def test_same_seed_same_plan():
    a, b = make_folds(100, seed=9), make_folds(100, seed=9)
    np.testing.assert_array_equal(a.fold_of, b.fold_of)
    for k in range(5):
        for x, y in zip(a.split(k), b.split(k)):
            np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a.fold_of, make_folds(100, seed=10).fold_of)


def check_plan(plan, n):
    folds = [plan.test_indices(k) for k in range(5)]
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for k in range(5):
        tr, va, te = plan.split(k)
        assert not set(tr) & set(te) and not set(va) & set(te) and not set(tr) & set(va)
        assert len(tr) + len(va) + len(te) == n
        pool = len(tr) + len(va)
        assert len(va) == round(pool * 0.2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(5, 3000), seed=st.integers(0, 2**32 - 1))
def test_fold_invariants(n, seed):
    check_plan(make_folds(n, seed), n)


def test_grouped_folds_keep_trials_together():
    groups = np.repeat(np.arange(12), 10)
    plan = make_folds(len(groups), seed=0, groups=groups)
    for g in range(12):
        assert len(set(plan.fold_of[groups == g])) == 1


def test_windowset_concat_and_subset():
    a = slice_windows(_recording([3], subject="A"), 1, TOPO)
    b = slice_windows(_recording([2], subject="B", seed=1), 1, TOPO)
    ws = WindowSet.concat([a, b])
    assert len(ws) == 5 and list(ws.subjects) == ["A"] * 3 + ["B"] * 2
    sub = ws.subset([4, 0])
    np.testing.assert_array_equal(sub.grids[0], b.grids[1])
    assert list(sub.group_keys()) == ["B/0", "A/0"]
