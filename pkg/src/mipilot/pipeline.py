"""Streaming classification: one decision per stride over a sliding window."""
from __future__ import annotations

import queue
import threading
import time
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .csp import VAR_FLOOR
from .errors import InvalidSpec, ModelMismatch, SourceEnded
from .io import ModelBundle
from .lda import LdaModel
from .signal import DEFAULT_SAMPLE_RATE, BandSpec, CausalBandpass
from .svm import BinarySvmModel, MultiClassSvmModel, vote

HOLD = -1
RENORM_EVERY = 10_000


@dataclass(frozen=True)
class PipelineConfig:
    window_len: int = 128
    stride: int = 1
    band: BandSpec = field(default_factory=BandSpec)
    mode: str = "two_class"
    smoothing: int = 1
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.window_len < 2:
            raise InvalidSpec(f"window_len must be >= 2, got {self.window_len}")
        if self.stride < 1:
            raise InvalidSpec(f"stride must be >= 1, got {self.stride}")
        if self.smoothing < 1 or self.smoothing % 2 == 0:
            raise InvalidSpec(f"smoothing must be an odd integer >= 1, got {self.smoothing}")
        if self.mode not in ("two_class", "four_class"):
            raise InvalidSpec(f"mode must be two_class or four_class, got {self.mode!r}")
        self.band.check(self.sample_rate)


@dataclass(frozen=True)
class Decision:
    timestamp: int
    class_id: int
    confidence: float
    latency_us: float

    @property
    def is_hold(self) -> bool:
        return self.class_id == HOLD

    def line(self) -> str:
        cls = "hold" if self.is_hold else str(self.class_id)
        return (f"t={self.timestamp},class={cls},conf={self.confidence:.6g},"
                f"lat_us={int(round(self.latency_us))}")


@dataclass(frozen=True)
class ThroughputReport:
    decisions_per_second: float
    p50_latency_us: float
    p99_latency_us: float
    total_decisions: int
    wall_seconds: float
    samples: int = 0

    def line(self) -> str:
        return (f"rate={self.decisions_per_second:.3f},p50_us={self.p50_latency_us:.1f},"
                f"p99_us={self.p99_latency_us:.1f},decisions={self.total_decisions},"
                f"wall_s={self.wall_seconds:.6f}")


class RunningVariance:
    """Population variance of each component over the last ``window`` samples.

    Keeps running sums of the samples and their squares, offset by a
    reference point to limit cancellation. Every ``renorm_every`` updates
    the sums are rebuilt from the ring buffer and the reference moves to
    the current window mean, which bounds drift.
    """

    def __init__(self, window: int, n_components: int, renorm_every: int = RENORM_EVERY):
        self.window = window
        self.renorm_every = renorm_every
        self.buf = np.zeros((window, n_components))
        self.count = 0
        self._head = 0
        self._since = 0
        self._ref = np.zeros(n_components)
        self._s1 = np.zeros(n_components)
        self._s2 = np.zeros(n_components)

    @property
    def filled(self) -> int:
        return min(self.count, self.window)

    def push(self, x: np.ndarray) -> None:
        if self.count == 0:
            self._ref = np.array(x, dtype=np.float64)
        d_new = x - self._ref
        if self.count >= self.window:
            d_old = self.buf[self._head] - self._ref
            self._s1 += d_new - d_old
            self._s2 += d_new * d_new - d_old * d_old
        else:
            self._s1 += d_new
            self._s2 += d_new * d_new
        self.buf[self._head] = x
        self._head = (self._head + 1) % self.window
        self.count += 1
        self._since += 1
        if self._since >= self.renorm_every:
            self.renormalize()

    def renormalize(self) -> None:
        n = self.filled
        if n == 0:
            return
        data = self.window_data()
        self._ref = data.mean(axis=0)
        dev = data - self._ref
        self._s1 = dev.sum(axis=0)
        self._s2 = (dev * dev).sum(axis=0)
        self._since = 0

    def window_data(self) -> np.ndarray:
        """Current window in arrival order, shape (filled, components)."""
        if self.count < self.window:
            return self.buf[:self.count]
        return np.roll(self.buf, -self._head, axis=0)

    def variance(self) -> np.ndarray:
        n = self.filled
        mean = self._s1 / n
        return np.maximum(self._s2 / n - mean * mean, 0.0)


def _check_models(bundle: ModelBundle, cfg: PipelineConfig, n_channels: Optional[int]):
    csp, clf = bundle.csp, bundle.classifier
    if n_channels is not None and csp.n_channels != n_channels:
        raise ModelMismatch(f"model expects {csp.n_channels} channels, source has {n_channels}")
    if clf.n_features != csp.n_features:
        raise ModelMismatch(
            f"classifier expects {clf.n_features} features, CSP yields {csp.n_features}")
    if cfg.mode == "two_class" and not isinstance(clf, (LdaModel, BinarySvmModel)):
        raise ModelMismatch("two_class mode needs an LDA or binary SVM model")
    if cfg.mode == "four_class" and not isinstance(clf, MultiClassSvmModel):
        raise ModelMismatch("four_class mode needs a multiclass SVM model")


def _classifier_fn(clf) -> Callable[[np.ndarray], tuple]:
    if isinstance(clf, LdaModel):
        w, z0, pos, neg = clf.w, clf.z0, clf.class_pos, clf.class_neg

        def classify(x):
            z = float(w @ x)
            return (pos if z >= z0 else neg), abs(z - z0)
        return classify
    if isinstance(clf, BinarySvmModel):
        coef = clf.alphas * clf.labels
        sv, deg, b = clf.support_vectors, clf.kernel.degree, clf.bias

        def classify(x):
            v = float(((sv @ x + 1.0) ** deg) @ coef + b)
            return (1 if v >= 0 else 2), abs(v)  # +1 side is task class 1
        return classify

    def classify(x):
        return vote(clf, clf.decision_values(x))
    return classify


class StreamClassifier:
    """Per-sample state machine behind :func:`run_stream`.

    Each pushed sample goes through the causal band-pass, the CSP filters
    and the windowed variance; once ``window_len`` samples are buffered a
    decision is produced every ``stride`` samples.
    """

    def __init__(self, bundle: ModelBundle, cfg: PipelineConfig,
                 n_channels: Optional[int] = None):
        _check_models(bundle, cfg, n_channels)
        self.cfg = cfg
        self.bundle = bundle
        self.n_channels = bundle.csp.n_channels
        self.filter = CausalBandpass(cfg.band, cfg.sample_rate, self.n_channels)
        self.w_csp = bundle.csp.w_csp
        self.variance = RunningVariance(cfg.window_len, bundle.csp.n_features)
        self.classify = _classifier_fn(bundle.classifier)
        self.recent = deque(maxlen=cfg.smoothing)
        self.n_seen = 0

    def features(self) -> Optional[np.ndarray]:
        """Log-variance shares of the current window, or None if degenerate."""
        var = self.variance.variance()
        total = var.sum()
        if total < VAR_FLOOR or np.any(var <= 0):
            return None
        return np.log(var / total)

    def _smooth(self, cls: int) -> int:
        self.recent.append(cls)
        if len(self.recent) == 1 or self.cfg.smoothing == 1:
            return cls
        counts = Counter(self.recent)
        top = max(counts.values())
        for c in reversed(self.recent):  # ties go to the most recent
            if counts[c] == top:
                return c
        return cls

    def push(self, x) -> Optional[Decision]:
        started = time.perf_counter_ns()
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_channels,):
            raise ModelMismatch(f"sample has shape {x.shape}, expected ({self.n_channels},)")
        s = self.w_csp @ self.filter.step(x)
        self.variance.push(s)
        self.n_seen += 1
        w = self.cfg.window_len
        if self.n_seen < w or (self.n_seen - w) % self.cfg.stride:
            return None
        feats = self.features()
        if feats is None:
            cls, conf = HOLD, 0.0
        else:
            cls, conf = self.classify(feats)
        cls = self._smooth(cls)
        latency = (time.perf_counter_ns() - started) / 1000.0
        return Decision(self.n_seen - 1, cls, float(conf), latency)


def run_stream(source: Iterable, bundle: ModelBundle, cfg: PipelineConfig,
               n_channels: Optional[int] = None) -> Iterator[Decision]:
    """Yield decisions for a stream of per-sample channel vectors.

    The stream ends normally when the source is exhausted or raises
    :class:`SourceEnded`.
    """
    clf = StreamClassifier(bundle, cfg, n_channels)
    try:
        for x in source:
            d = clf.push(x)
            if d is not None:
                yield d
    except SourceEnded:
        return


def trial_samples(samples: np.ndarray, sample_rate: float = DEFAULT_SAMPLE_RATE,
                  realtime: bool = False) -> Iterator[np.ndarray]:
    """Column-by-column replay of a (channels, time) matrix, optionally paced."""
    samples = np.asarray(samples)
    if not realtime:
        yield from samples.T
        return
    t0 = time.perf_counter()
    for i, col in enumerate(samples.T):
        wait = t0 + i / sample_rate - time.perf_counter()
        if wait > 0:
            time.sleep(wait)
        yield col


def session_samples(session, realtime: bool = False) -> Iterator[np.ndarray]:
    """Replay every trial of a session back to back."""
    data = np.concatenate([t.samples for t in session.trials], axis=1)
    return trial_samples(data, session.sample_rate, realtime)


def text_samples(lines: Iterable[str], n_channels: int) -> Iterator[np.ndarray]:
    """Parse lines of ``n_channels`` comma-separated reals (e.g. standard input)."""
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_channels:
            raise ModelMismatch(
                f"input line {lineno}: expected {n_channels} values, got {len(parts)}")
        try:
            yield np.array([float(p) for p in parts])
        except ValueError:
            raise ModelMismatch(f"input line {lineno}: malformed number") from None


_END = object()


def bounded(source: Iterable, maxsize: int = 256) -> Iterator:
    """Run ``source`` in a producer thread feeding a bounded queue.

    A full queue blocks the producer; producer exceptions are re-raised in
    the consumer.
    """
    q = queue.Queue(maxsize=maxsize)
    stop = threading.Event()

    def produce():
        try:
            for item in source:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
            q.put(_END)
        except BaseException as exc:  # handed to the consumer
            q.put(exc)

    thread = threading.Thread(target=produce, name="mipilot-source", daemon=True)
    thread.start()
    try:
        while True:
            item = q.get()
            if item is _END:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()


class Broadcaster:
    """Deliver each decision to every subscriber in subscription order."""

    def __init__(self):
        self.subscribers = []

    def subscribe(self, fn: Callable[[Decision], None]) -> None:
        self.subscribers.append(fn)

    def publish(self, decision: Decision) -> None:
        for fn in self.subscribers:
            fn(decision)

    def drain(self, decisions: Iterable[Decision]) -> int:
        n = 0
        for d in decisions:
            self.publish(d)
            n += 1
        return n


def summarize(decisions, wall_seconds: float, samples: int = 0) -> ThroughputReport:
    lat = np.array([d.latency_us for d in decisions]) if decisions else np.zeros(1)
    n = len(decisions)
    rate = n / wall_seconds if wall_seconds > 0 else float("inf")
    return ThroughputReport(rate, float(np.percentile(lat, 50)), float(np.percentile(lat, 99)),
                            n, wall_seconds, samples)


def _looped(data: np.ndarray, deadline: float) -> Iterator[np.ndarray]:
    """Cycle through the columns of ``data`` until ``deadline`` (perf_counter seconds)."""
    cols = data.T
    while True:
        for col in cols:
            yield col
        if time.perf_counter() >= deadline:
            return


def benchmark(cfg: PipelineConfig, bundle: ModelBundle, seconds: float = 10.0,
              seed: int = 0, threaded: bool = True) -> ThroughputReport:
    """Stream random input at full speed for at least ``seconds`` of wall time.

    With ``threaded`` the samples pass through the bounded producer/consumer
    queue used for live input.
    """
    if seconds < 10:
        raise InvalidSpec(f"benchmark needs >= 10 s of streamed data, got {seconds}")
    rng = np.random.default_rng(seed)
    block = int(round(seconds * cfg.sample_rate))
    data = rng.standard_normal((bundle.csp.n_channels, block)) * 10.0
    counter = _Counted(_looped(data, time.perf_counter() + seconds))
    source = bounded(counter) if threaded else counter
    t0 = time.perf_counter()
    decisions = list(run_stream(source, bundle, cfg, bundle.csp.n_channels))
    wall = time.perf_counter() - t0
    return summarize(decisions, wall, counter.n)


class _Counted:
    def __init__(self, it):
        self.it = it
        self.n = 0

    def __iter__(self):
        for x in self.it:
            self.n += 1
            yield x
