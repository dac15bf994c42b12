"""Command-line interface: gen, train, eval, stream, bench."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import comlink
from .errors import InvalidSpec, MipilotError, ModelMismatch
from .io import load_model, load_session, save_model, save_session
from .pipeline import (Broadcaster, PipelineConfig, benchmark, bounded, run_stream,
                       session_samples, summarize, text_samples)
from .signal import BandSpec
from .synth import SynthSpec, generate_session
from .workflow import bundle_band, evaluate_bundle, train_bundle

DEFAULT_SEED = 0


def default_seed() -> int:
    raw = os.environ.get("MIPILOT_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise InvalidSpec(f"MIPILOT_SEED must be an integer, got {raw!r}") from None


def parse_band(text: str) -> tuple:
    lo, sep, hi = str(text).partition("-")
    try:
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise InvalidSpec(f"band must look like LOW-HIGH, got {text!r}") from None
    if not sep or not 0 < lo < hi:
        raise InvalidSpec(f"band needs 0 < low < high, got {text!r}")
    return lo, hi


def _band(args, order_attr="order") -> BandSpec:
    lo, hi = parse_band(args.band)
    try:
        return BandSpec(lo, hi, getattr(args, order_attr))
    except MipilotError as exc:
        raise InvalidSpec(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mipilot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON file of flag defaults (flags override it)")
        return sp

    g = add("gen", "write a synthetic session file")
    g.add_argument("--classes", type=int, default=2, choices=(2, 4))
    g.add_argument("--trials", type=int, default=20, help="trials per class")
    g.add_argument("--duration", type=float, default=4.0, help="seconds per task trial")
    g.add_argument("--rest", type=float, default=2.0, help="seconds of rest between tasks")
    g.add_argument("--channels", type=int, default=14)
    g.add_argument("--sample-rate", type=float, default=128.0)
    g.add_argument("--separation", type=float, default=4.0,
                   help="variance ratio of each class's marker source")
    g.add_argument("--noise", type=float, default=0.1, help="sensor noise sigma")
    g.add_argument("--band", default="8-30", help="source band LOW-HIGH in Hz")
    g.add_argument("--seed", type=int, default=None, help="trial noise seed")
    g.add_argument("--mixing-seed", type=int, default=0,
                   help="seed of the source-to-sensor mixing matrix")
    g.add_argument("--out", default="session.csv")

    t = add("train", "fit CSP + classifier on a session")
    t.add_argument("--session", required=True)
    t.add_argument("--mode", choices=("two_class", "four_class"), default="two_class")
    t.add_argument("--m", type=int, default=3, help="CSP filter pairs")
    t.add_argument("--degree", type=int, default=2, help="SVM kernel degree")
    t.add_argument("--c-cap", type=float, default=1.0, help="SVM multiplier cap")
    t.add_argument("--band", default="8-30")
    t.add_argument("--order", type=int, default=4, help="band-pass filter order")
    t.add_argument("--window", type=int, default=None,
                   help="epoch length in samples (default: 1 s)")
    t.add_argument("--out", default="model.txt")

    e = add("eval", "score a model on a session")
    e.add_argument("--session", required=True)
    e.add_argument("--model", required=True)

    s = add("stream", "classify a sample stream and drive a sink")
    s.add_argument("--model", required=True)
    s.add_argument("--session", default=None, help="session file; omit to read stdin")
    s.add_argument("--realtime", action="store_true", help="pace input at the sample rate")
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--window", type=int, default=None)
    s.add_argument("--smoothing", type=int, default=1)
    s.add_argument("--sink", choices=("none", "elevon", "quad"), default="none")
    s.add_argument("--mapping", default=None, help="e.g. 1=LEFT,2=RIGHT")
    s.add_argument("--udp", default=None, help="also send frames to HOST:PORT")
    s.add_argument("--sink-log", default=None, help="write sink lines here instead of stdout")
    s.add_argument("--sample-rate", type=float, default=None,
                   help="rate of stdin samples (default: the model's)")

    b = add("bench", "measure sustained decision rate")
    b.add_argument("--model", default=None, help="model file; omit to train a synthetic one")
    b.add_argument("--mode", choices=("two_class", "four_class"), default="two_class")
    b.add_argument("--seconds", type=float, default=10.0)
    b.add_argument("--stride", type=int, default=1)
    b.add_argument("--window", type=int, default=None)
    b.add_argument("--seed", type=int, default=None)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    """Parse with precedence flag > --config file > built-in default."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidSpec(f"cannot read config {args.config}: {exc}") from None
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        config = {k.replace("-", "_"): v for k, v in config.items()}
        unknown = sorted(set(config) - known)
        if unknown:
            raise InvalidSpec(f"unknown config key(s) {unknown} for {args.command}")
        subparser.set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def cmd_gen(args, out) -> int:
    seed = default_seed() if args.seed is None else args.seed
    if args.trials < 1 or args.duration <= 0 or args.rest < 0:
        raise InvalidSpec("trials must be >= 1, duration > 0 and rest >= 0")
    lo, hi = parse_band(args.band)
    base = SynthSpec.make(args.classes, args.channels, args.sample_rate, args.separation,
                          args.noise, seed, mixing_seed=args.mixing_seed)
    try:
        spec = SynthSpec(base.channels, base.sample_rate, base.n_sources, base.mixing,
                         base.class_profiles, base.noise_sigma, seed, BandSpec(lo, hi, 8))
    except MipilotError as exc:
        raise InvalidSpec(str(exc)) from None
    session = generate_session(spec, args.trials, args.duration, args.rest)
    save_session(session, args.out)
    counts = session.class_counts()
    labeled = sum(counts.values())
    print(f"trials={len(session.trials)} labeled={labeled} "
          f"rest={len(session.trials) - labeled} out={args.out}", file=out)
    print(" ".join(f"class{c}={n}" for c, n in counts.items()), file=out)
    return 0


def cmd_train(args, out) -> int:
    session = load_session(args.session)
    window = args.window or int(round(session.sample_rate))
    bundle, ev = train_bundle(session, args.mode, args.m, args.degree, args.c_cap,
                              _band(args), window)
    save_model(bundle, args.out)
    print(ev.line(), file=out)
    print(ev.table(), file=out)
    print(f"model={args.out} mode={args.mode}", file=out)
    return 0


def cmd_eval(args, out) -> int:
    bundle = load_model(args.model)
    session = load_session(args.session)
    ev = evaluate_bundle(bundle, session)
    print(ev.line(), file=out)
    print(ev.table(), file=out)
    return 0


def _pipeline_config(bundle, args, sample_rate) -> PipelineConfig:
    window = args.window or int(bundle.meta.get("window_len", round(sample_rate)))
    return PipelineConfig(window_len=window, stride=args.stride, band=bundle_band(bundle),
                          mode=bundle.mode, smoothing=getattr(args, "smoothing", 1),
                          sample_rate=sample_rate)


class SinkDriver:
    """Turns decisions into frames and feeds the selected sink."""

    def __init__(self, kind, mapping, log, udp=None):
        self.kind = kind
        self.mapping = mapping
        self.log = log
        self.seq = comlink.Sequencer()
        self.elevon = comlink.ElevonState()
        self.quad = comlink.QuadCommandLog()
        self.udp = udp
        self.link = comlink.InProcessLink(self._receive)

    def _receive(self, frame: bytes):
        if self.kind == "elevon":
            self.elevon = comlink.elevon_step(self.elevon, frame)
            print(self.elevon.line(), file=self.log)
        elif self.kind == "quad":
            before = len(self.quad.entries)
            comlink.quad_ingest(self.quad, frame)
            if len(self.quad.entries) > before:
                print(self.quad.lines()[-1], file=self.log)

    def __call__(self, decision):
        frame = self.seq.frame(decision, self.mapping)
        if self.udp is not None:
            self.udp.send(frame)
        try:
            self.link.send(frame)
        except MipilotError as exc:
            raise type(exc)(f"at sample {decision.timestamp}: {exc}") from None


def cmd_stream(args, out) -> int:
    bundle = load_model(args.model)
    model_rate = float(bundle.meta.get("sample_rate", 128.0))
    if args.session:
        session = load_session(args.session)
        if session.channels != bundle.csp.n_channels:
            raise ModelMismatch(f"model expects {bundle.csp.n_channels} channels, "
                                f"session {args.session} has {session.channels}")
        rate = session.sample_rate
        source = session_samples(session, args.realtime)
    else:
        rate = args.sample_rate or model_rate
        source = text_samples(sys.stdin, bundle.csp.n_channels)
    cfg = _pipeline_config(bundle, args, rate)
    mapping = comlink.parse_mapping(args.mapping) if args.mapping else comlink.DEFAULT_MAPPING

    log_fh = open(args.sink_log, "w", encoding="utf-8") if args.sink_log else out
    udp = None
    if args.udp:
        host, _, port = args.udp.rpartition(":")
        udp = comlink.DatagramLink(host or "127.0.0.1", int(port))
    decisions, first_at = [], []

    def record(d):
        if not decisions:
            first_at.append(time.perf_counter())
        decisions.append(d)

    hub = Broadcaster()
    hub.subscribe(record)
    hub.subscribe(lambda d: print(d.line(), file=out))
    if args.sink != "none" or udp is not None:
        hub.subscribe(SinkDriver(args.sink, mapping, log_fh, udp))
    try:
        hub.drain(run_stream(bounded(source), bundle, cfg, bundle.csp.n_channels))
    finally:
        if log_fh is not out:
            log_fh.close()
        if udp is not None:
            udp.close()
    # rate is measured from the first decision, after the window has filled
    wall = time.perf_counter() - first_at[0] if first_at else 0.0
    report = summarize(decisions, wall)
    print(report.line(), file=out)
    return 0


def _synthetic_bundle(mode: str, seed: int):
    spec = SynthSpec.make(2 if mode == "two_class" else 4, seed=seed)
    session = generate_session(spec, 10, 4.0, rest_s=0)
    bundle, _ = train_bundle(session, mode, c_cap=1.0)
    return bundle


def cmd_bench(args, out) -> int:
    seed = default_seed() if args.seed is None else args.seed
    if args.model:
        bundle = load_model(args.model)
    else:
        bundle = _synthetic_bundle(args.mode, seed)
    rate = float(bundle.meta.get("sample_rate", 128.0))
    cfg = _pipeline_config(bundle, args, rate)
    report = benchmark(cfg, bundle, args.seconds, seed)
    print(report.line(), file=out)
    print(f"mode             {bundle.mode}\n"
          f"channels         {bundle.csp.n_channels}\n"
          f"window/stride    {cfg.window_len}/{cfg.stride}\n"
          f"decisions        {report.total_decisions}\n"
          f"wall seconds     {report.wall_seconds:.3f}\n"
          f"decisions/s      {report.decisions_per_second:.1f}\n"
          f"latency p50/p99  {report.p50_latency_us:.1f} / {report.p99_latency_us:.1f} us",
          file=out)
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
            "stream": cmd_stream, "bench": cmd_bench}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args, out)
    except MipilotError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
