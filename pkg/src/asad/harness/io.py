"""EEG container format and CSV fixture import.

Container layout (little-endian)::

    b"ASADEEG1"  u32 version  u32 fs  u32 n_channels  u32 n_trials
    n_channels x (u32 byte length, UTF-8 label)
    per trial: u32 trial_id, u8 label (0=left, 1=right), u64 n_samples,
               n_channels * n_samples float32 samples, channel-major

The container carries no subject field; the subject id is the file stem.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dsp import RecordingBuffer

MAGIC = b"ASADEEG1"
VERSION = 1
LEFT, RIGHT = 0, 1
LABEL_NAMES = {LEFT: "left", RIGHT: "right"}
SUFFIX = ".asad"


class EegFormatError(ValueError):
    pass


@dataclass
class Trial:
    buffer: RecordingBuffer
    label: int
    trial_id: int


@dataclass
class EegRecording:
    subject_id: str
    trials: list = field(default_factory=list)

    def __post_init__(self):
        for t in self.trials:
            if t.label not in LABEL_NAMES:
                raise EegFormatError(f"trial {t.trial_id}: label {t.label} outside {{0 (left), 1 (right)}}")
        if self.trials:
            first = self.trials[0].buffer
            for t in self.trials[1:]:
                if t.buffer.fs != first.fs or list(t.buffer.channel_labels) != list(first.channel_labels):
                    raise EegFormatError(f"trial {t.trial_id}: channel labels / fs differ from trial "
                                         f"{self.trials[0].trial_id}")

    @property
    def fs(self):
        return self.trials[0].buffer.fs if self.trials else None

    @property
    def channel_labels(self) -> list:
        return list(self.trials[0].buffer.channel_labels) if self.trials else []

    def map_buffers(self, fn) -> "EegRecording":
        return EegRecording(self.subject_id, [Trial(fn(t.buffer), t.label, t.trial_id) for t in self.trials])


def to_bytes(rec: EegRecording) -> bytes:
    fs = rec.fs if rec.trials else 0
    if fs != int(fs):
        raise EegFormatError(f"container stores integer sampling rates, got {fs}")
    labels = rec.channel_labels
    parts = [MAGIC, struct.pack("<IIII", VERSION, int(fs), len(labels), len(rec.trials))]
    for lab in labels:
        b = lab.encode("utf-8")
        parts.append(struct.pack("<I", len(b)) + b)
    for t in rec.trials:
        x = np.asarray(t.buffer.samples)
        parts.append(struct.pack("<IBQ", t.trial_id, t.label, x.shape[1]))
        parts.append(np.ascontiguousarray(x, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(data: bytes, subject_id: str = "subject") -> EegRecording:
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise EegFormatError(
                f"truncated file while reading {what}: expected at least {pos + n} bytes, got {len(data)}")
        out = data[pos:pos + n]
        pos += n
        return out

    if take(8, "magic") != MAGIC:
        raise EegFormatError("bad magic: not an ASADEEG1 container")
    version, fs, n_ch, n_trials = struct.unpack("<IIII", take(16, "header"))
    if version != VERSION:
        raise EegFormatError(f"unsupported container version {version}")
    labels = []
    for i in range(n_ch):
        (n,) = struct.unpack("<I", take(4, f"label {i} length"))
        labels.append(take(n, f"label {i}").decode("utf-8"))
    trials = []
    for i in range(n_trials):
        trial_id, label, n_samples = struct.unpack("<IBQ", take(13, f"trial {i} header"))
        if label not in LABEL_NAMES:
            raise EegFormatError(f"trial {trial_id}: label {label} outside {{0 (left), 1 (right)}} "
                                 f"at byte offset {pos - 9}")
        raw = take(4 * n_ch * n_samples, f"trial {i} samples")
        x = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(n_ch, n_samples)
        if np.isnan(x).any():
            raise EegFormatError(f"trial {trial_id}: NaN samples")
        trials.append(Trial(RecordingBuffer(x, fs, labels), int(label), int(trial_id)))
    if pos != len(data):
        raise EegFormatError(f"{len(data) - pos} trailing bytes after trial {n_trials - 1} "
                             f"(expected {pos} bytes, got {len(data)})")
    return EegRecording(subject_id, trials)


def write_recording(rec: EegRecording, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(rec))
    return path


def ingest(path) -> EegRecording:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return from_bytes(path.read_bytes(), subject_id=path.stem)


def _parse_label(text: str) -> int:
    t = text.strip().lower()
    if t in ("0", "left", "l"):
        return LEFT
    if t in ("1", "right", "r"):
        return RIGHT
    raise EegFormatError(f"label {text!r} outside {{left, right}}")


def read_csv(path, labels_path=None) -> EegRecording:
    """CSV fixture import.

    ``path`` has a header ``time,<ch1>,...,<chN>``; the sidecar (default
    ``<path>.labels``) has one ``trial_id,label,start,stop`` line per trial,
    with sample indices [start, stop). The sampling rate comes from the time
    column.
    """
    path = Path(path)
    labels_path = Path(labels_path) if labels_path else path.with_name(path.name + ".labels")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0].strip().lower() != "time":
            raise EegFormatError(f"{path}: first column must be 'time'")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[0] < 2:
        raise EegFormatError(f"{path}: need at least two samples")
    fs = 1.0 / np.median(np.diff(data[:, 0]))
    fs = int(round(fs))
    channels = [h.strip() for h in header[1:]]
    samples = data[:, 1:].T
    if np.isnan(samples).any():
        raise EegFormatError(f"{path}: NaN samples")
    trials = []
    for line in labels_path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tid, lab, start, stop = [p.strip() for p in line.split(",")]
        x = samples[:, int(start):int(stop)].astype(np.float32)
        trials.append(Trial(RecordingBuffer(x, fs, channels), _parse_label(lab), int(tid)))
    return EegRecording(path.stem, trials)
