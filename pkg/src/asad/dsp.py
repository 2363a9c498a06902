"""EEG preprocessing: downsampling to 128 Hz, beta band-pass, per-channel z-score.

The band-pass is designed here from the analog Butterworth prototype
(low-pass -> band-pass transform, bilinear transform with pre-warped band
edges) and stored as second-order sections. Filtering itself and the
polyphase resampling engine are delegated to scipy.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import signal

TARGET_FS = 128
BETA_BAND = (14.0, 31.0)
FILTER_ORDER = 8


class PreprocessError(ValueError):
    pass


@dataclass
class RecordingBuffer:
    """Channels x time samples with their sampling rate and channel labels."""

    samples: np.ndarray
    fs: float
    channel_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if self.channel_labels and len(self.channel_labels) != self.samples.shape[0]:
            raise PreprocessError(
                f"{len(self.channel_labels)} channel labels for {self.samples.shape[0]} channels")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class BiquadCascade:
    """Second-order sections, one row ``[b0, b1, b2, 1, a1, a2]`` per section."""

    sos: np.ndarray
    order: int
    f_low: float
    f_high: float
    fs: float

    @property
    def sections(self):
        return [dict(b0=r[0], b1=r[1], b2=r[2], a1=r[4], a2=r[5]) for r in self.sos]

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(r[3:]) for r in self.sos])

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / self.fs)  # z^-1
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h *= (b0 + b1 * z + b2 * z * z) / (1 + a1 * z + a2 * z * z)
        return h

    def magnitude_db(self, freqs) -> np.ndarray:
        return 20 * np.log10(np.abs(self.response(freqs)))


def design_butterworth_bandpass(order: int = FILTER_ORDER, f_low: float = BETA_BAND[0],
                                f_high: float = BETA_BAND[1], fs: float = TARGET_FS) -> BiquadCascade:
    """Digital Butterworth band-pass of total order ``order`` as ``order // 2`` biquads."""
    if order < 2 or order % 2:
        raise PreprocessError(f"band-pass order must be even and >= 2, got {order}")
    if not 0 < f_low < f_high < fs / 2:
        raise PreprocessError(f"need 0 < f_low < f_high < fs/2, got {f_low}, {f_high}, fs={fs}")
    n = order // 2
    # analog low-pass prototype poles (left half plane, unit cutoff)
    k = np.arange(1, n + 1)
    proto = np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))

    fs2 = 2.0 * fs
    w1 = fs2 * np.tan(np.pi * f_low / fs)
    w2 = fs2 * np.tan(np.pi * f_high / fs)
    w0, bw = np.sqrt(w1 * w2), w2 - w1

    # s -> (s^2 + w0^2) / (bw s): each prototype pole splits into two
    half = proto * bw / 2
    disc = np.sqrt(half * half - w0 * w0)
    poles = np.concatenate([half + disc, half - disc])
    gain = bw ** n  # n zeros at s = 0, n at infinity

    # bilinear transform; zeros at s=0 -> z=1, zeros at infinity -> z=-1
    zpoles = (fs2 + poles) / (fs2 - poles)
    gain = gain * np.real(fs2 ** n / np.prod(fs2 - poles))

    upper = zpoles[zpoles.imag > 0]
    upper = upper[np.argsort(np.abs(upper))]
    if len(upper) != n:
        raise PreprocessError("pole pairing failed: expected complex-conjugate digital poles")
    section_gain = np.abs(gain) ** (1.0 / n)
    sos = np.zeros((n, 6))
    for i, p in enumerate(upper):
        sos[i, :3] = section_gain * np.array([1.0, 0.0, -1.0])  # (1 - z^-1)(1 + z^-1)
        sos[i, 3:] = [1.0, -2.0 * p.real, abs(p) ** 2]
    if gain < 0:
        sos[0, :3] *= -1
    return BiquadCascade(sos, order, f_low, f_high, fs)


def apply_filter(buffer: RecordingBuffer, cascade: BiquadCascade) -> RecordingBuffer:
    """Causal filtering per channel, zero initial state (direct form II transposed)."""
    if not np.isclose(buffer.fs, cascade.fs):
        raise PreprocessError(f"sampling rate mismatch: buffer {buffer.fs} Hz, filter {cascade.fs} Hz")
    out = signal.sosfilt(cascade.sos, np.asarray(buffer.samples, dtype=np.float64), axis=-1)
    return replace(buffer, samples=out)


def kaiser_lowpass(fs: float, cutoff: float, transition: float, atten_db: float = 70.0) -> np.ndarray:
    """Windowed-sinc low-pass (Kaiser window), unit DC gain, odd length."""
    if atten_db > 50:
        beta = 0.1102 * (atten_db - 8.7)
    elif atten_db >= 21:
        beta = 0.5842 * (atten_db - 21) ** 0.4 + 0.07886 * (atten_db - 21)
    else:
        beta = 0.0
    dw = 2 * np.pi * transition / fs
    ntaps = int(np.ceil((atten_db - 7.95) / (2.285 * dw))) + 1
    ntaps += 1 - ntaps % 2
    t = np.arange(ntaps) - (ntaps - 1) / 2
    h = 2 * cutoff / fs * np.sinc(2 * cutoff / fs * t) * np.kaiser(ntaps, beta)
    return h / h.sum()


def anti_alias_filter(fs_in: float, target: float = TARGET_FS) -> tuple[int, int, np.ndarray]:
    """Rational factors ``(up, down)`` and the low-pass used at the upsampled rate.

    Cut-off 0.45 * target; the stop band starts at 60 Hz for target 128
    (transition centred on the cut-off), with 70 dB attenuation.
    """
    ratio = Fraction(target).limit_denominator() / Fraction(fs_in).limit_denominator()
    up, down = ratio.numerator, ratio.denominator
    cutoff = 0.45 * target
    transition = 2 * (target * 60.0 / 128.0 - cutoff)
    return up, down, kaiser_lowpass(fs_in * up, cutoff, transition)


def resample_to_128(buffer: RecordingBuffer) -> RecordingBuffer:
    if buffer.fs < TARGET_FS:
        raise PreprocessError(f"cannot resample {buffer.fs} Hz to {TARGET_FS} Hz: upsampling is not supported")
    if buffer.fs == TARGET_FS:
        return buffer
    up, down, h = anti_alias_filter(buffer.fs)
    out = signal.resample_poly(np.asarray(buffer.samples, dtype=np.float64), up, down, axis=-1, window=h)
    return replace(buffer, samples=out, fs=TARGET_FS)


def zscore_normalize(buffer: RecordingBuffer, floor: float = 1e-12) -> RecordingBuffer:
    """Per channel: subtract the mean, divide by the population std; flat channels become zeros."""
    x = np.asarray(buffer.samples, dtype=np.float64)
    if x.shape[1] < 2:
        raise PreprocessError("z-score needs at least 2 samples per channel")
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    flat = std[:, 0] < floor
    out = (x - mean) / np.where(std < floor, 1.0, std)
    out[flat] = 0.0
    return replace(buffer, samples=out)


def preprocess(buffer: RecordingBuffer, cascade: BiquadCascade | None = None) -> RecordingBuffer:
    """resample -> band-pass -> z-score."""
    buffer = resample_to_128(buffer)
    cascade = cascade or design_butterworth_bandpass()
    return zscore_normalize(apply_filter(buffer, cascade))
