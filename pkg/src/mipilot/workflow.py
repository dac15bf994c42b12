"""Offline training and evaluation over sessions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.pipeline import Pipeline

from .csp import CSP, DEFAULT_PAIRS, apply_csp, extract_features
from .errors import InvalidSpec, ModelMismatch
from .io import ModelBundle
from .lda import FisherLDA, LdaModel
from .signal import BandPassFilter, BandSpec, bandpass, epochs
from .svm import (DEFAULT_C_CAP, DEFAULT_DEGREE, BinarySvmModel, PolySVC, decision_value,
                  predict_multiclass)


def make_pipeline(mode: str = "two_class", n_pairs: int = DEFAULT_PAIRS,
                  degree: int = DEFAULT_DEGREE, c_cap: float = DEFAULT_C_CAP,
                  band: BandSpec = None, sample_rate: float = 128.0) -> Pipeline:
    """Band-pass -> CSP -> classifier, for batches shaped (n_epochs, channels, time)."""
    steps = []
    if band is not None:
        steps.append(("bandpass", BandPassFilter(band.low_hz, band.high_hz, band.filter_order,
                                                 sample_rate)))
    steps.append(("csp", CSP(n_pairs=n_pairs)))
    if mode == "two_class":
        steps.append(("lda", FisherLDA()))
    elif mode == "four_class":
        steps.append(("svm", PolySVC(degree=degree, c_cap=c_cap)))
    else:
        raise InvalidSpec(f"unknown mode {mode!r}")
    return Pipeline(steps)


def session_epochs(session, band: BandSpec, window: int, stride: int = None,
                   zero_phase: bool = True):
    """Filter each labeled trial whole, then cut it into windows.

    Returns ``(X, y)`` with X shaped (n_windows, channels, window).
    """
    stride = window if stride is None else stride
    xs, ys = [], []
    for t in session.labeled:
        f = bandpass(t, band, zero_phase)
        if f.n_times < window:
            continue
        arr = epochs(f, window, stride).as_array()
        xs.append(arr)
        ys.append(np.full(len(arr), t.label))
    if not xs:
        raise InvalidSpec(f"no labeled trial is at least {window} samples long")
    return np.concatenate(xs), np.concatenate(ys)


@dataclass
class Evaluation:
    accuracy: float
    per_class: dict
    confusion: dict
    n: int

    def line(self) -> str:
        return f"acc={self.accuracy:.6f}"

    def table(self) -> str:
        ids = sorted(self.per_class)
        rows = ["class  n     acc     " + " ".join(f"->{c:<4}" for c in ids)]
        for c in ids:
            row = self.confusion.get(c, {})
            n = sum(row.values())
            rows.append(f"{c:<6} {n:<5} {self.per_class[c]:.4f}  "
                        + " ".join(f"{row.get(p, 0):<6}" for p in ids))
        return "\n".join(rows)


def evaluate_predictions(y_true, y_pred) -> Evaluation:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    confusion, per_class = {}, {}
    for c in sorted(set(y_true.tolist())):
        mask = y_true == c
        preds = y_pred[mask]
        confusion[c] = {int(p): int(np.sum(preds == p)) for p in sorted(set(preds.tolist()))}
        per_class[c] = float(np.mean(preds == c))
    return Evaluation(float(np.mean(y_true == y_pred)), per_class, confusion, len(y_true))


def train_bundle(session, mode: str = "two_class", m: int = DEFAULT_PAIRS,
                 degree: int = DEFAULT_DEGREE, c_cap: float = DEFAULT_C_CAP,
                 band: BandSpec = None, window: int = 128):
    """Fit CSP + classifier on a session. Returns ``(bundle, train Evaluation)``."""
    band = band or BandSpec()
    classes = sorted(session.class_counts())
    want = 2 if mode == "two_class" else 4
    if len(classes) != want:
        raise InvalidSpec(f"{mode} needs exactly {want} classes, session has {classes}")
    X, y = session_epochs(session, band, window)
    pipe = make_pipeline(mode, m, degree, c_cap).fit(X, y)
    csp = pipe.named_steps["csp"].model_
    clf = pipe.steps[-1][1].model_
    meta = {"sample_rate": f"{session.sample_rate:.17g}", "band_low": f"{band.low_hz:.17g}",
            "band_high": f"{band.high_hz:.17g}", "filter_order": str(band.filter_order),
            "window_len": str(window)}
    bundle = ModelBundle(csp, clf, meta)
    return bundle, evaluate_predictions(y, pipe.predict(X))


def bundle_band(bundle: ModelBundle) -> BandSpec:
    meta = bundle.meta
    if "band_low" not in meta:
        return BandSpec()
    return BandSpec(float(meta["band_low"]), float(meta["band_high"]), int(meta["filter_order"]))


def predict_features(bundle: ModelBundle, feats: np.ndarray) -> np.ndarray:
    clf = bundle.classifier
    if isinstance(clf, LdaModel):
        z = feats @ clf.w
        return np.where(z >= clf.z0, clf.class_pos, clf.class_neg)
    if isinstance(clf, BinarySvmModel):
        return np.where(decision_value(clf, feats) >= 0, 1, 2)
    return np.array([predict_multiclass(clf, f) for f in feats])


def evaluate_bundle(bundle: ModelBundle, session, window: int = None) -> Evaluation:
    if session.channels != bundle.csp.n_channels:
        raise ModelMismatch(
            f"model expects {bundle.csp.n_channels} channels, session has {session.channels}")
    window = window or int(bundle.meta.get("window_len", 128))
    X, y = session_epochs(session, bundle_band(bundle), window)
    feats = extract_features(apply_csp(bundle.csp, X))
    return evaluate_predictions(y, predict_features(bundle, feats))
