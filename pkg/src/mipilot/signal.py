"""Signal data types, covariance estimation and preprocessing."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    BandOutOfRange,
    EmptyClass,
    IndexOutOfRange,
    InvalidTrial,
    WindowTooLong,
    ZeroSignal,
)

DEFAULT_SAMPLE_RATE = 128.0
CLASS_IDS = (1, 2, 3, 4)
ZERO_TRACE = 1e-30


@dataclass(frozen=True)
class EegTrial:
    """One multichannel recording, ``samples`` shaped (channels, time) in µV.

    ``label`` is a task id in 1..4, or None for unlabeled data (rest
    segments, live streams). The sample matrix is stored channel-major and
    made read-only on construction.
    """

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    label: Optional[int] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.ndim != 2:
            raise InvalidTrial(f"samples must be 2-D (channels, time), got {x.ndim}-D")
        if x.shape[0] < 1:
            raise InvalidTrial("trial needs at least one channel")
        if x.shape[1] < 2:
            raise InvalidTrial(f"trial needs at least 2 time samples, got {x.shape[1]}")
        if not np.isfinite(x).all():
            raise InvalidTrial("trial contains non-finite samples")
        if not self.sample_rate > 0:
            raise InvalidTrial(f"sample_rate must be positive, got {self.sample_rate}")
        if self.label is not None and self.label not in CLASS_IDS:
            raise InvalidTrial(f"label must be one of {CLASS_IDS} or None, got {self.label}")
        # read-only inputs (e.g. windows of another trial) are shared, not copied
        x = x.copy() if x.flags.writeable else x.view()
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_times(self) -> int:
        return self.samples.shape[1]

    def with_samples(self, samples) -> "EegTrial":
        return EegTrial(samples, self.sample_rate, self.label)


@dataclass(frozen=True)
class SpatialCovariance:
    """Trace-normalized channel covariance."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidTrial(f"covariance must be square, got shape {m.shape}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_channels(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class BandSpec:
    low_hz: float = 8.0
    high_hz: float = 30.0
    filter_order: int = 4

    def __post_init__(self):
        if not self.low_hz > 0:
            raise BandOutOfRange(f"low_hz must be > 0, got {self.low_hz}")
        if not self.high_hz > self.low_hz:
            raise BandOutOfRange(
                f"high_hz ({self.high_hz}) must exceed low_hz ({self.low_hz})")
        if self.filter_order < 2 or self.filter_order % 2:
            raise BandOutOfRange(
                f"filter_order must be an even positive integer, got {self.filter_order}")

    def check(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2.0
        if self.high_hz >= nyquist:
            raise BandOutOfRange(
                f"high_hz {self.high_hz} is at or above Nyquist ({nyquist} Hz)")

    def sos(self, sample_rate: float) -> np.ndarray:
        """Butterworth band-pass as second-order sections (order/2 sections)."""
        self.check(sample_rate)
        return sps.butter(self.filter_order // 2, [self.low_hz, self.high_hz],
                          btype="bandpass", fs=sample_rate, output="sos")


@dataclass(frozen=True)
class Epoch:
    start: int
    length: int
    stride: int = 1


def normalized_covariance(trial: EegTrial) -> SpatialCovariance:
    """E Eᵀ / tr(E Eᵀ) for one trial."""
    e = trial.samples
    c = e @ e.T
    tr = np.trace(c)
    if tr < ZERO_TRACE:
        raise ZeroSignal(f"trial trace {tr:g} is below {ZERO_TRACE:g}")
    c = c / tr
    # exact symmetry regardless of BLAS summation order
    c = (c + c.T) / 2.0
    return SpatialCovariance(c)


def class_mean_covariance(trials, class_id: int) -> SpatialCovariance:
    """Mean of per-trial normalized covariances over trials labeled ``class_id``."""
    selected = [t for t in trials if t.label == class_id]
    if not selected:
        raise EmptyClass(f"no trial carries class {class_id}")
    acc = np.zeros((selected[0].channel_count,) * 2)
    for t in selected:
        acc += normalized_covariance(t).matrix
    return SpatialCovariance(acc / len(selected))


def bandpass(trial: EegTrial, band: BandSpec, zero_phase: bool = True) -> EegTrial:
    """Filter every channel; forward-backward when ``zero_phase`` else causal."""
    sos = band.sos(trial.sample_rate)
    if zero_phase:
        y = sps.sosfiltfilt(sos, trial.samples, axis=-1)
    else:
        y = sps.sosfilt(sos, trial.samples, axis=-1)
    return trial.with_samples(y)


class CausalBandpass:
    """Sample-by-sample cascaded biquad filter over all channels at once.

    Uses the transposed direct form II update, the same recurrence as
    ``scipy.signal.sosfilt``, so block and streaming outputs agree.
    """

    def __init__(self, band: BandSpec, sample_rate: float, n_channels: int):
        self.sos = band.sos(sample_rate)
        self.n_channels = n_channels
        self._b = [tuple(row[:3]) for row in self.sos]
        self._a = [tuple(row[4:]) for row in self.sos]
        self.reset()

    def reset(self):
        self._z = np.zeros((len(self.sos), 2, self.n_channels))

    def step(self, x: np.ndarray) -> np.ndarray:
        z = self._z
        for s, ((b0, b1, b2), (a1, a2)) in enumerate(zip(self._b, self._a)):
            y = b0 * x + z[s, 0]
            z[s, 0] = b1 * x - a1 * y + z[s, 1]
            z[s, 1] = b2 * x - a2 * y
            x = y
        return x

    def process(self, block: np.ndarray) -> np.ndarray:
        """Filter a (channels, time) block, carrying state across calls."""
        zi = np.moveaxis(self._z, 2, 1).copy()  # (sections, channels, 2)
        y, zf = sps.sosfilt(self.sos, block, axis=-1, zi=zi)
        self._z = np.ascontiguousarray(np.moveaxis(zf, 1, 2))
        return y


def select_channels(trial: EegTrial, keep) -> EegTrial:
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise IndexOutOfRange(f"channel indices must be unique: {keep}")
    for k in keep:
        if not 0 <= k < trial.channel_count:
            raise IndexOutOfRange(
                f"channel index {k} out of range for {trial.channel_count} channels")
    if not keep:
        raise IndexOutOfRange("keep at least one channel")
    return trial.with_samples(trial.samples[keep, :])


def epoch_count(n_times: int, length: int, stride: int) -> int:
    return (n_times - length) // stride + 1


class EpochSequence(Sequence):
    """Lazy windows over a trial; each item is an :class:`EegTrial` view."""

    def __init__(self, trial: EegTrial, length: int, stride: int):
        self.trial = trial
        self.length = length
        self.stride = stride
        self._n = epoch_count(trial.n_times, length, stride)

    def __len__(self):
        return self._n

    def epoch(self, i: int) -> Epoch:
        return Epoch(i * self.stride, self.length, self.stride)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self._n))]
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        start = i * self.stride
        return self.trial.with_samples(self.trial.samples[:, start:start + self.length])

    def as_array(self) -> np.ndarray:
        """All windows as a (n_windows, channels, length) strided view."""
        view = np.lib.stride_tricks.sliding_window_view(
            self.trial.samples, self.length, axis=1)
        return view[:, ::self.stride, :].transpose(1, 0, 2)


def epochs(trial: EegTrial, length: int, stride: int = 1) -> EpochSequence:
    if length < 2:
        raise WindowTooLong(f"window length must be >= 2, got {length}")
    if stride < 1:
        raise WindowTooLong(f"stride must be >= 1, got {stride}")
    if length > trial.n_times:
        raise WindowTooLong(
            f"window of {length} samples exceeds trial of {trial.n_times}")
    return EpochSequence(trial, length, stride)


def as_trial_array(X) -> np.ndarray:
    """Validate a batch of trials shaped (n_trials, channels, time)."""
    if isinstance(X, EegTrial):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], EegTrial):
        X = np.stack([t.samples for t in X])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise InvalidTrial(f"expected (n_trials, channels, time), got shape {X.shape}")
    if not np.isfinite(X).all():
        raise InvalidTrial("input contains non-finite values")
    return X


class BandPassFilter(TransformerMixin, BaseEstimator):
    """Band-pass each channel of a trial batch.

    Parameters
    ----------
    low_hz, high_hz : float
        Pass band edges.
    filter_order : int
        Even Butterworth order (order/2 second-order sections).
    sample_rate : float
        Samples per second of the input.
    zero_phase : bool
        Forward-backward filtering when True, causal otherwise.
    """

    def __init__(self, low_hz=8.0, high_hz=30.0, filter_order=4,
                 sample_rate=DEFAULT_SAMPLE_RATE, zero_phase=True):
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.filter_order = filter_order
        self.sample_rate = sample_rate
        self.zero_phase = zero_phase

    def fit(self, X, y=None):
        self.band_ = BandSpec(self.low_hz, self.high_hz, self.filter_order)
        self.sos_ = self.band_.sos(self.sample_rate)
        return self

    def transform(self, X):
        check_is_fitted(self, "sos_")
        X = as_trial_array(X)
        if self.zero_phase:
            return sps.sosfiltfilt(self.sos_, X, axis=-1)
        return sps.sosfilt(self.sos_, X, axis=-1)
