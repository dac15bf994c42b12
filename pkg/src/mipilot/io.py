"""Text formats for sessions and fitted models.

Reals are written with 17 significant digits, which round-trips every
double exactly. Files are UTF-8 with LF line endings.

Session::

    mipilot-csv v1
    channels=<int>,sample_rate=<real>
    trial label=<int> samples=<int>      (label 0 marks an unlabeled segment)
    <channel 0 samples, comma separated>
    ...

Model: a ``mipilot-csp v1`` section followed by ``mipilot-lda v1`` or
``mipilot-svm v1``, and optionally ``mipilot-pipeline v1`` holding the
preprocessing settings the model was trained with.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .csp import CspModel
from .errors import FormatError, InvalidTrial
from .lda import LdaModel
from .signal import EegTrial
from .svm import BinarySvmModel, KernelSpec, MultiClassSvmModel
from .synth import Session

SESSION_MAGIC = "mipilot-csv v1"
CSP_MAGIC = "mipilot-csp v1"
LDA_MAGIC = "mipilot-lda v1"
SVM_MAGIC = "mipilot-svm v1"
PIPELINE_MAGIC = "mipilot-pipeline v1"


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def fmt_row(values) -> str:
    return ",".join(fmt(v) for v in np.ravel(values))


class _Lines:
    """Line cursor that reports 1-based positions in errors."""

    def __init__(self, text: str, path=None):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0
        self.path = path

    def error(self, message, offset=0):
        return FormatError(message, self.path, self.pos + offset)

    def done(self) -> bool:
        return self.pos >= len(self.lines)

    def next(self, what="line") -> str:
        if self.done():
            raise FormatError(f"unexpected end of file, expected {what}", self.path, self.pos)
        line = self.lines[self.pos]
        self.pos += 1
        if line.endswith("\r"):
            raise self.error("CR line endings are not allowed")
        return line

    def reals(self, count: int, what="values", line=None) -> np.ndarray:
        if line is None:
            line = self.next(what)
        parts = line.split(",")
        if len(parts) != count:
            raise self.error(f"expected {count} {what}, found {len(parts)}")
        try:
            return np.array([float(p) for p in parts])
        except ValueError:
            raise self.error(f"malformed number in {what}") from None

    def keyvals(self, prefix: str, keys) -> dict:
        line = self.next(prefix or "key=value line")
        body = line
        if prefix:
            if not line.startswith(prefix + " "):
                raise self.error(f"expected '{prefix} ...', got {line[:40]!r}")
            body = line[len(prefix) + 1:]
        sep = "," if not prefix else " "
        out = {}
        for item in body.split(sep):
            k, eq, v = item.partition("=")
            if not eq:
                raise self.error(f"malformed field {item!r}")
            out[k.strip()] = v.strip()
        missing = [k for k in keys if k not in out]
        if missing:
            raise self.error(f"missing field(s) {missing}")
        return out

    def value(self, key: str, cast=str):
        line = self.next(key)
        k, eq, v = line.partition("=")
        if not eq or k != key:
            raise self.error(f"expected '{key}=...', got {line[:40]!r}")
        try:
            return cast(v)
        except ValueError:
            raise self.error(f"bad value for {key}: {v!r}") from None


def dumps_session(session: Session) -> str:
    out = [SESSION_MAGIC, f"channels={session.channels},sample_rate={fmt(session.sample_rate)}"]
    for t in session.trials:
        label = 0 if t.label is None else t.label
        out.append(f"trial label={label} samples={t.n_times}")
        out.extend(fmt_row(row) for row in t.samples)
    return "\n".join(out) + "\n"


def loads_session(text: str, path=None) -> Session:
    lines = _Lines(text, path)
    if lines.next("header") != SESSION_MAGIC:
        raise lines.error(f"first line must be {SESSION_MAGIC!r}")
    head = lines.keyvals("", ("channels", "sample_rate"))
    try:
        channels = int(head["channels"])
        rate = float(head["sample_rate"])
    except ValueError:
        raise lines.error("bad channels/sample_rate") from None
    if channels < 1 or not rate > 0:
        raise lines.error("channels and sample_rate must be positive")
    trials = []
    while not lines.done():
        fields = lines.keyvals("trial", ("label", "samples"))
        try:
            label = int(fields["label"])
            n = int(fields["samples"])
        except ValueError:
            raise lines.error("bad trial header values") from None
        rows = [lines.reals(n, f"samples of trial {len(trials)}") for _ in range(channels)]
        try:
            trials.append(EegTrial(np.vstack(rows), rate, label or None))
        except InvalidTrial as exc:
            raise lines.error(f"trial {len(trials)}: {exc}") from None
    return Session(channels, rate, trials)


def save_session(session: Session, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_session(session))


def load_session(path) -> Session:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads_session(fh.read(), str(path))


@dataclass
class ModelBundle:
    """A CSP model with its classifier and the preprocessing it expects."""

    csp: CspModel
    classifier: Union[LdaModel, BinarySvmModel, MultiClassSvmModel]
    meta: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "two_class" if isinstance(self.classifier, LdaModel) else "four_class"

    @property
    def class_ids(self) -> tuple:
        c = self.classifier
        if isinstance(c, LdaModel):
            return (c.class_pos, c.class_neg)
        if isinstance(c, MultiClassSvmModel):
            return c.class_ids
        # a single machine separates task class 1 (+1) from class 2 (-1)
        return (1, 2)


def _csp_lines(model: CspModel):
    ch, m = model.n_channels, model.m
    out = [CSP_MAGIC, f"ch={ch}", f"m={m}", "w_csp"]
    out.extend(fmt_row(row) for row in model.w_csp)
    out += ["eigenvalues", fmt_row(model.eigenvalues)]
    return out


def _lda_lines(model: LdaModel):
    return [LDA_MAGIC, f"d={model.n_features}", "w=" + fmt_row(model.w),
            f"z0={fmt(model.z0)}", f"class_pos={model.class_pos}",
            f"class_neg={model.class_neg}"]


def _machine_lines(pair, machine: BinarySvmModel):
    out = [f"machine pair={pair[0]},{pair[1]} n_sv={machine.n_support} bias={fmt(machine.bias)}"]
    for a, y, x in zip(machine.alphas, machine.labels, machine.support_vectors):
        out.append(f"{fmt(a)},{int(y)}," + fmt_row(x))
    return out


def _svm_lines(model):
    if isinstance(model, BinarySvmModel):
        machines, pairs, ids = (model,), ((1, -1),), (1, -1)
    else:
        machines, pairs, ids = model.machines, model.pairs, model.class_ids
    first = machines[0]
    out = [SVM_MAGIC, f"degree={first.kernel.degree}", f"c_cap={fmt(first.c_cap)}",
           f"d={first.n_features}", "classes=" + ",".join(str(c) for c in ids),
           f"machines={len(machines)}"]
    for pair, m in zip(pairs, machines):
        out.extend(_machine_lines(pair, m))
    return out


def dumps_model(bundle: ModelBundle) -> str:
    out = _csp_lines(bundle.csp)
    if isinstance(bundle.classifier, LdaModel):
        out += _lda_lines(bundle.classifier)
    else:
        out += _svm_lines(bundle.classifier)
    if bundle.meta:
        out.append(PIPELINE_MAGIC)
        out.extend(f"{k}={v}" for k, v in bundle.meta.items())
    return "\n".join(out) + "\n"


def _read_csp(lines: _Lines) -> CspModel:
    ch = lines.value("ch", int)
    m = lines.value("m", int)
    if ch < 1 or m < 1 or 2 * m > ch:
        raise lines.error(f"invalid ch={ch}, m={m}")
    if lines.next("w_csp") != "w_csp":
        raise lines.error("expected 'w_csp'")
    w = np.vstack([lines.reals(ch, "filter coefficients") for _ in range(2 * m)])
    if lines.next("eigenvalues") != "eigenvalues":
        raise lines.error("expected 'eigenvalues'")
    lam = lines.reals(ch, "eigenvalues")
    return CspModel(w_csp=w, eigenvalues=lam, m=m)


def _read_lda(lines: _Lines) -> LdaModel:
    d = lines.value("d", int)
    line = lines.next("w")
    if not line.startswith("w="):
        raise lines.error("expected 'w=...'")
    w = lines.reals(d, "discriminant weights", line[2:])
    z0 = lines.value("z0", float)
    pos = lines.value("class_pos", int)
    neg = lines.value("class_neg", int)
    return LdaModel(w, z0, pos, neg)


def _read_svm(lines: _Lines):
    degree = lines.value("degree", int)
    c_cap = lines.value("c_cap", float)
    d = lines.value("d", int)
    ids = tuple(int(c) for c in lines.value("classes").split(","))
    count = lines.value("machines", int)
    kernel = KernelSpec(degree)
    pairs, machines = [], []
    for _ in range(count):
        head = lines.keyvals("machine", ("pair", "n_sv", "bias"))
        try:
            pair = tuple(int(c) for c in head["pair"].split(","))
            n_sv = int(head["n_sv"])
            bias = float(head["bias"])
        except ValueError:
            raise lines.error("bad machine header") from None
        rows = np.vstack([lines.reals(d + 2, "support vector") for _ in range(n_sv)]) \
            if n_sv else np.zeros((0, d + 2))
        pairs.append(pair)
        machines.append(BinarySvmModel(rows[:, 2:].copy(), rows[:, 1].copy(),
                                       rows[:, 0].copy(), bias, kernel, c_cap))
    if count == 1 and pairs[0] == (1, -1):
        return machines[0]
    return MultiClassSvmModel(ids, tuple(pairs), tuple(machines))


def loads_model(text: str, path=None) -> ModelBundle:
    lines = _Lines(text, path)
    if lines.next("header") != CSP_MAGIC:
        raise lines.error(f"first line must be {CSP_MAGIC!r}")
    csp = _read_csp(lines)
    magic = lines.next("classifier section")
    if magic == LDA_MAGIC:
        clf = _read_lda(lines)
    elif magic == SVM_MAGIC:
        clf = _read_svm(lines)
    else:
        raise lines.error(f"unknown section {magic!r}")
    if clf.n_features != csp.n_features:
        raise lines.error(
            f"classifier expects {clf.n_features} features, CSP yields {csp.n_features}")
    meta = {}
    if not lines.done():
        if lines.next("section") != PIPELINE_MAGIC:
            raise lines.error("unexpected trailing content")
        while not lines.done():
            k, eq, v = lines.next().partition("=")
            if not eq:
                raise lines.error("expected key=value")
            meta[k] = v
    return ModelBundle(csp, clf, meta)


def save_model(bundle: ModelBundle, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(bundle))


def load_model(path) -> ModelBundle:
    with open(path, encoding="utf-8", newline="") as fh:
        return loads_model(fh.read(), str(path))
