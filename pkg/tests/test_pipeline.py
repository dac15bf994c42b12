import threading
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from oracles import two_pass_variance

from mipilot.csp import apply_csp, extract_features
from mipilot.errors import BandOutOfRange, InvalidSpec, ModelMismatch, SourceEnded
from mipilot.io import ModelBundle
from mipilot.pipeline import (HOLD, Broadcaster, Decision, PipelineConfig, RunningVariance,
                              StreamClassifier, ThroughputReport, benchmark, bounded,
                              run_stream, session_samples, summarize, text_samples,
                              trial_samples)
from mipilot.signal import bandpass
from mipilot.svm import KernelSpec, fit_binary_svm
from mipilot.synth import SynthSpec, generate_session
from mipilot.workflow import bundle_band, train_bundle


@pytest.fixture(scope="module")
def trained():
    session = generate_session(SynthSpec.make(2, channels=8, seed=11), 10, 4.0)
    bundle, _ = train_bundle(session, "two_class")
    held_out = generate_session(SynthSpec.make(2, channels=8, seed=12), 10, 4.0)
    return bundle, held_out


@pytest.fixture(scope="module")
def trained4():
    session = generate_session(SynthSpec.make(4, channels=8, seed=5), 8, 4.0, 0)
    bundle, _ = train_bundle(session, "four_class", c_cap=1.0)
    return bundle


def cfg_for(bundle, **kw):
    kw.setdefault("band", bundle_band(bundle))
    return PipelineConfig(**kw)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"stride": 0}, {"smoothing": 2}, {"smoothing": 0},
                                    {"window_len": 1}, {"mode": "three_class"}])
    def test_invalid(self, kw):
        with pytest.raises(InvalidSpec):
            PipelineConfig(**kw)

    def test_band_above_nyquist(self):
        with pytest.raises(BandOutOfRange):
            PipelineConfig(sample_rate=50.0)

    def test_decision_line(self):
        assert Decision(127, 2, 0.5, 41.6).line() == "t=127,class=2,conf=0.5,lat_us=42"
        assert Decision(3, HOLD, 0.0, 1.0).line() == "t=3,class=hold,conf=0,lat_us=1"


class TestRunningVariance:
    @given(st.integers(8, 64), st.integers(0, 2**32 - 1), st.floats(-1e4, 1e4),
           st.integers(1, 50))
    def test_matches_two_pass(self, window, seed, offset, renorm):
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((300, 3)) * rng.uniform(0.01, 100, 3) + offset
        rv = RunningVariance(window, 3, renorm_every=renorm)
        for t, x in enumerate(data):
            rv.push(x)
            win = data[max(0, t + 1 - window):t + 1]
            np.testing.assert_array_equal(rv.window_data(), win)
            if len(win) < 2:
                continue
            ref = two_pass_variance(win)
            assert np.max(np.abs(rv.variance() - ref) / ref) <= 1e-9

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.integers(1, 50))
    def test_absolute_error_any_window(self, window, seed, renorm):
        # near-constant short windows lose relative accuracy, but the
        # absolute error stays at rounding level of the signal's spread
        rng = np.random.default_rng(seed)
        data = rng.standard_normal((300, 2)) * [1.0, 50.0]
        rv = RunningVariance(window, 2, renorm_every=renorm)
        for t, x in enumerate(data):
            rv.push(x)
            win = data[max(0, t + 1 - window):t + 1]
            spread = data[:t + 1].var(axis=0) + 1.0
            assert np.all(np.abs(rv.variance() - two_pass_variance(win)) <= 1e-12 * spread)

    def test_constant_window_is_zero(self):
        rv = RunningVariance(4, 1)
        for _ in range(10):
            rv.push(np.array([3.25]))
        assert rv.variance()[0] == 0.0


class TestStream:
    def test_offline_equivalence(self, trained):
        bundle, session = trained
        trial = session.labeled[0]
        cfg = cfg_for(bundle, window_len=64, stride=3)
        offline = apply_csp(bundle.csp, bandpass(trial, cfg.band, zero_phase=False))
        clf = StreamClassifier(bundle, cfg)
        checked = 0
        for t, x in enumerate(trial.samples.T):
            if clf.push(x) is not None:
                ref = extract_features(offline[:, t + 1 - 64:t + 1])
                got = clf.features()
                assert np.max(np.abs(got - ref) / np.abs(ref)) <= 1e-9
                checked += 1
        assert checked == (trial.n_times - 64) // 3 + 1

    def test_accuracy_after_first_window(self, trained):
        bundle, session = trained
        cfg = cfg_for(bundle)
        labels = np.concatenate([np.full(t.n_times, t.label or 0) for t in session.trials])
        hits = total = 0
        for d in run_stream(session_samples(session), bundle, cfg):
            seg = labels[d.timestamp + 1 - cfg.window_len:d.timestamp + 1]
            if seg[0] and np.all(seg == seg[0]):
                total += 1
                hits += d.class_id == seg[0]
        assert total > 1000
        assert hits / total >= 0.95

    def test_zero_input_holds(self, trained):
        bundle, _ = trained
        out = list(run_stream(trial_samples(np.zeros((8, 300))), bundle, cfg_for(bundle)))
        assert len(out) == 300 - 128 + 1
        assert all(d.is_hold and d.confidence == 0.0 for d in out)

    @pytest.mark.parametrize("n", [128 * 5, 128 * 5 + 127])
    def test_non_overlapping_count(self, trained, rng, n):
        bundle, _ = trained
        cfg = cfg_for(bundle, stride=128)
        out = list(run_stream(trial_samples(rng.standard_normal((8, n))), bundle, cfg))
        assert len(out) == n // 128

    @given(st.integers(2, 40), st.integers(1, 9), st.integers(40, 200))
    def test_timing_invariants(self, window, stride, n):
        rng = np.random.default_rng(window * 1000 + stride)
        bundle = _small_bundle()
        cfg = PipelineConfig(window_len=window, stride=stride)
        out = list(run_stream(trial_samples(rng.standard_normal((4, n))), bundle, cfg))
        stamps = [d.timestamp for d in out]
        assert stamps == list(range(window - 1, n, stride))
        assert all(d.latency_us >= 0 and d.confidence >= 0 for d in out)

    def test_stride_two_halves_decisions(self, trained, rng):
        bundle, _ = trained
        data = rng.standard_normal((8, 128 * 20))
        one = list(run_stream(trial_samples(data), bundle, cfg_for(bundle, stride=1)))
        two = list(run_stream(trial_samples(data), bundle, cfg_for(bundle, stride=2)))
        assert abs(len(two) / len(one) - 0.5) <= 0.05 * 0.5

    def test_four_class_stream(self, trained4, rng):
        cfg = cfg_for(trained4, mode="four_class")
        out = list(run_stream(trial_samples(rng.standard_normal((8, 400))), trained4, cfg))
        assert len(out) == 400 - 127
        assert {d.class_id for d in out} <= {1, 2, 3, 4}
        assert all(d.confidence >= 0 for d in out)

    def test_mode_mismatch(self, trained, trained4):
        with pytest.raises(ModelMismatch):
            StreamClassifier(trained[0], PipelineConfig(mode="four_class"))
        with pytest.raises(ModelMismatch):
            StreamClassifier(trained4, PipelineConfig(mode="two_class"))

    def test_channel_mismatch(self, trained):
        bundle, _ = trained
        with pytest.raises(ModelMismatch):
            StreamClassifier(bundle, cfg_for(bundle), n_channels=14)
        clf = StreamClassifier(bundle, cfg_for(bundle))
        with pytest.raises(ModelMismatch):
            clf.push(np.zeros(7))

    def test_binary_svm_bundle_uses_task_ids(self, trained, rng):
        bundle, _ = trained
        X = rng.standard_normal((20, 6))
        y = np.r_[np.ones(10), -np.ones(10)]
        svm = fit_binary_svm(X + y[:, None], y, KernelSpec(2), 10.0)
        out = list(run_stream(trial_samples(rng.standard_normal((8, 300))),
                              ModelBundle(bundle.csp, svm), cfg_for(bundle)))
        assert {d.class_id for d in out} <= {1, 2}

    def test_source_ended_is_normal(self, trained, rng):
        bundle, _ = trained

        def source():
            yield from rng.standard_normal((200, 8))
            raise SourceEnded("done")
        assert len(list(run_stream(source(), bundle, cfg_for(bundle)))) == 200 - 127


class TestSmoothing:
    def run(self, labels, k):
        clf = StreamClassifier.__new__(StreamClassifier)
        clf.cfg = PipelineConfig(smoothing=k)
        from collections import deque
        clf.recent = deque(maxlen=k)
        return [clf._smooth(c) for c in labels]

    def test_off(self):
        assert self.run([1, 2, 1, 2], 1) == [1, 2, 1, 2]

    def test_majority(self):
        assert self.run([1, 1, 2, 1, 2, 2, 2], 3) == [1, 1, 1, 1, 2, 2, 2]

    def test_tie_goes_to_most_recent(self):
        # window [1, 2] is a tie; the newest entry wins
        assert self.run([1, 2], 3) == [1, 2]
        assert self.run([1, 2, HOLD, 3], 5)[-1] == 3


class TestPlumbing:
    def test_text_samples(self):
        rows = list(text_samples(["1,2", "", "3.5,-4\n"], 2))
        np.testing.assert_array_equal(rows, [[1, 2], [3.5, -4]])
        with pytest.raises(ModelMismatch, match="line 1"):
            list(text_samples(["1,2,3"], 2))
        with pytest.raises(ModelMismatch, match="malformed"):
            list(text_samples(["1,x"], 2))

    def test_bounded_preserves_order(self):
        assert list(bounded(iter(range(1000)), maxsize=4)) == list(range(1000))

    def test_bounded_forwards_errors(self):
        def source():
            yield 1
            raise ValueError("sensor unplugged")
        it = bounded(source())
        assert next(it) == 1
        with pytest.raises(ValueError, match="unplugged"):
            next(it)

    def test_bounded_back_pressure(self):
        produced = []

        def source():
            for i in range(100):
                produced.append(i)
                yield i
        it = bounded(source(), maxsize=5)
        assert next(it) == 0
        time.sleep(0.3)
        # queue of 5 plus one item held by the blocked producer
        assert len(produced) <= 7
        assert list(it) == list(range(1, 100))

    def test_broadcaster(self):
        a, b = [], []
        hub = Broadcaster()
        hub.subscribe(a.append)
        hub.subscribe(lambda d: b.append(d.timestamp))
        ds = [Decision(i, 1, 0.0, 0.0) for i in range(3)]
        assert hub.drain(ds) == 3
        assert a == ds and b == [0, 1, 2]

    def test_summarize(self):
        ds = [Decision(i, 1, 0.0, float(i)) for i in range(101)]
        r = summarize(ds, 2.0)
        assert r.decisions_per_second == 50.5
        assert r.p50_latency_us == 50.0
        assert abs(r.wall_seconds * r.decisions_per_second - r.total_decisions) <= 1
        assert r.line().startswith("rate=50.500,p50_us=50.0,")
        assert isinstance(r, ThroughputReport)

    def test_realtime_pacing(self):
        data = np.zeros((1, 64))
        t0 = time.perf_counter()
        assert len(list(trial_samples(data, 128.0, realtime=True))) == 64
        assert time.perf_counter() - t0 >= 63 / 128

    def test_benchmark_needs_ten_seconds(self, trained):
        with pytest.raises(InvalidSpec):
            benchmark(cfg_for(trained[0]), trained[0], seconds=5)

    def test_threads_are_released(self):
        before = threading.active_count()
        it = bounded(iter(range(10_000)), maxsize=2)
        next(it)
        it.close()
        time.sleep(0.3)
        assert threading.active_count() <= before


_BUNDLE = []


def _small_bundle():
    if not _BUNDLE:
        spec = SynthSpec.make(2, channels=4, seed=1)
        _BUNDLE.append(train_bundle(generate_session(spec, 4, 2.0, 0), "two_class",
                                    m=1)[0])
    return _BUNDLE[0]
