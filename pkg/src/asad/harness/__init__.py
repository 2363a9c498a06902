"""Data ingestion, windowing, cross-validation, training and evaluation."""
from .evaluate import EmptyWindowSetError, Metrics, decision_metrics, evaluate
from .io import LEFT, RIGHT, EegFormatError, EegRecording, Trial, from_bytes, ingest, read_csv, to_bytes, write_recording
from .protocol import (ProtocolOptions, Report, RunResult, derive_seed, read_report, run_fold, run_protocol,
                       window_recordings)
from .synthetic import SyntheticSpec, band_power_oracle, synthesize
from .training import TrainConfig, TrainingDiverged, TrainResult, predict_logits, train
from .windows import DURATIONS, N_FOLDS, DecisionWindow, FoldPlan, WindowSet, make_folds, slice_windows
