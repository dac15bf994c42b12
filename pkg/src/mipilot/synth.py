"""Synthetic EEG-like sessions with known class structure.

Each trial is ``e(t) = A s(t) + noise``: independent band-limited sources,
mixed onto the channels by a fixed matrix, with per-class source variances.
Sources are normalized over the whole trial, so a trial's source variances
equal its class profile exactly while shorter windows still fluctuate.
Random numbers come from numpy's PCG64 bit generator seeded through
``SeedSequence([seed, trial_index])``; Gaussian draws use the Box-Muller
transform on its 53-bit uniform doubles, so the stream depends only on
those documented algorithms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import InvalidSpec, UnknownClass
from .signal import DEFAULT_SAMPLE_RATE, BandSpec, EegTrial

MAX_TRIAL_SECONDS = 300.0
SOURCE_BAND = BandSpec(8.0, 30.0, 8)
SETTLE_SECONDS = 2.0


def gaussian(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws by Box-Muller over uniform doubles."""
    n = int(np.prod(size))
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n].reshape(size)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


@dataclass(frozen=True)
class SynthSpec:
    channels: int
    sample_rate: float
    n_sources: int
    mixing: np.ndarray
    class_profiles: dict
    noise_sigma: float = 0.0
    seed: int = 0
    band: BandSpec = SOURCE_BAND

    def __post_init__(self):
        a = np.array(self.mixing, dtype=np.float64)
        if a.shape != (self.channels, self.n_sources):
            raise InvalidSpec(
                f"mixing must be {self.channels}x{self.n_sources}, got {a.shape}")
        if np.linalg.matrix_rank(a) < self.n_sources:
            raise InvalidSpec("mixing matrix must have full column rank")
        profiles = {}
        for c, v in self.class_profiles.items():
            v = np.array(v, dtype=np.float64)
            if v.shape != (self.n_sources,) or np.any(v <= 0):
                raise InvalidSpec(f"profile of class {c} needs {self.n_sources} positive variances")
            v.flags.writeable = False
            profiles[c] = v
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec("seed must fit in 64 unsigned bits")
        self.band.check(self.sample_rate)
        a.flags.writeable = False
        object.__setattr__(self, "mixing", a)
        object.__setattr__(self, "class_profiles", profiles)

    @property
    def class_ids(self):
        return tuple(sorted(c for c in self.class_profiles if c is not None))

    @classmethod
    def make(cls, n_classes: int = 2, channels: int = 14,
             sample_rate: float = DEFAULT_SAMPLE_RATE, separation: float = 4.0,
             noise_sigma: float = 0.1, seed: int = 0, n_sources=None,
             mixing_seed: int = 0) -> "SynthSpec":
        """Random mixing; class k multiplies the variance of source k-1 by ``separation``.

        The mixing matrix depends only on ``mixing_seed`` so sessions drawn with
        different trial seeds share one head model.
        """
        if not 2 <= n_classes <= 4:
            raise InvalidSpec(f"n_classes must be 2..4, got {n_classes}")
        n_sources = channels if n_sources is None else n_sources
        if n_sources < n_classes:
            raise InvalidSpec("need at least one source per class")
        rng = trial_rng(mixing_seed, 2**32)
        mixing = gaussian(rng, (channels, n_sources))
        profiles = {}
        for k in range(1, n_classes + 1):
            v = np.ones(n_sources)
            v[k - 1] = separation
            profiles[k] = v
        return cls(channels, sample_rate, n_sources, mixing, profiles,
                   noise_sigma, seed)


def _sources(spec: SynthSpec, variances, n_times: int, rng) -> np.ndarray:
    """Band-limited sources, each rescaled to zero mean and exactly its target variance."""
    settle = int(SETTLE_SECONDS * spec.sample_rate)
    sos = spec.band.sos(spec.sample_rate)
    white = gaussian(rng, (spec.n_sources, n_times + settle))
    shaped = sps.sosfilt(sos, white, axis=-1)[:, settle:]
    shaped = shaped - shaped.mean(axis=1, keepdims=True)
    scale = np.sqrt(np.asarray(variances) / shaped.var(axis=1))
    return shaped * scale[:, None]


def generate_trial(spec: SynthSpec, class_id, duration_s: float,
                   trial_index: int = 0) -> EegTrial:
    """One trial of ``duration_s`` seconds; ``class_id`` None gives a rest segment."""
    if class_id is not None and class_id not in spec.class_profiles:
        raise UnknownClass(f"class {class_id} has no profile")
    n_times = int(round(duration_s * spec.sample_rate))
    if n_times < 2:
        raise InvalidSpec(f"duration {duration_s}s is shorter than 2 samples")
    rng = trial_rng(spec.seed, trial_index)
    if class_id is None:
        variances = np.ones(spec.n_sources)
    else:
        variances = spec.class_profiles[class_id]
    e = spec.mixing @ _sources(spec, variances, n_times, rng)
    if spec.noise_sigma > 0:
        e += spec.noise_sigma * gaussian(rng, e.shape)
    return EegTrial(e, spec.sample_rate, class_id)


@dataclass
class Session:
    channels: int
    sample_rate: float
    trials: list = field(default_factory=list)

    @property
    def labeled(self):
        return [t for t in self.trials if t.label is not None]

    def class_counts(self) -> dict:
        counts = {}
        for t in self.labeled:
            counts[t.label] = counts.get(t.label, 0) + 1
        return dict(sorted(counts.items()))


def validate_session(session: Session, max_seconds: float = MAX_TRIAL_SECONDS) -> None:
    """Reject trials longer than ``max_seconds`` or with inconsistent shape/rate."""
    for i, t in enumerate(session.trials):
        if t.channel_count != session.channels:
            raise InvalidSpec(
                f"trial {i} has {t.channel_count} channels, session has {session.channels}")
        if t.sample_rate != session.sample_rate:
            raise InvalidSpec(f"trial {i} sample rate differs from session")
        seconds = t.n_times / t.sample_rate
        if seconds > max_seconds:
            raise InvalidSpec(f"trial {i} lasts {seconds:g}s, above the {max_seconds:g}s limit")


def generate_session(spec: SynthSpec, trials_per_class: int, duration_s: float,
                     rest_s=None) -> Session:
    """Task trials cycling through the classes with a rest segment between tasks.

    ``rest_s`` defaults to ``duration_s``; 0 disables rest segments.
    """
    if duration_s > MAX_TRIAL_SECONDS:
        raise InvalidSpec(f"trial duration {duration_s}s exceeds {MAX_TRIAL_SECONDS:g}s")
    if trials_per_class < 1:
        raise InvalidSpec("trials_per_class must be >= 1")
    rest_s = duration_s if rest_s is None else rest_s
    trials = []
    order = [c for _ in range(trials_per_class) for c in spec.class_ids]
    for n, c in enumerate(order):
        if n and rest_s > 0:
            trials.append(generate_trial(spec, None, rest_s, len(trials)))
        trials.append(generate_trial(spec, c, duration_s, len(trials)))
    session = Session(spec.channels, spec.sample_rate, trials)
    validate_session(session)
    return session
