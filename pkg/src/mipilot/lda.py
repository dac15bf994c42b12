"""Two-class Fisher linear discriminant."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DegenerateScatter, DimMismatch, EmptyClass

RIDGE = 1e-8


@dataclass(frozen=True)
class LdaModel:
    w: np.ndarray
    z0: float
    class_pos: int = 1
    class_neg: int = 2

    @property
    def n_features(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class FitReport:
    mu1: np.ndarray
    mu2: np.ndarray
    sw: np.ndarray
    sb: np.ndarray
    j_value: float


def fisher_criterion(w, sb, sw) -> float:
    """Between-class over within-class scatter along ``w``."""
    w = np.asarray(w, dtype=np.float64)
    den = float(w @ sw @ w)
    num = float(w @ sb @ w)
    if den <= 0:
        return np.inf if num > 0 else 0.0
    return num / den


def _class_stats(x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mu = x.mean(axis=0)
    centered = x - mu
    return mu, centered.T @ centered / len(x)


def fit_lda(features_pos, features_neg, class_pos: int = 1, class_neg: int = 2,
            ridge: float = RIDGE):
    """Fit the discriminant direction and midpoint threshold.

    Returns ``(LdaModel, FitReport)``. The direction is normalized to unit
    length and oriented so that class ``class_pos`` projects higher.
    """
    xp = np.asarray(features_pos, dtype=np.float64)
    xn = np.asarray(features_neg, dtype=np.float64)
    if len(xp) == 0 or len(xn) == 0:
        raise EmptyClass("both classes need feature vectors")
    if len(xp) < 2 or len(xn) < 2:
        raise EmptyClass(f"need >= 2 samples per class, got {len(xp)} and {len(xn)}")
    if xp.ndim != 2 or xn.ndim != 2 or xp.shape[1] != xn.shape[1]:
        raise DimMismatch(f"feature shapes {xp.shape} and {xn.shape} do not match")
    d = xp.shape[1]

    mu1, sigma1 = _class_stats(xp)
    mu2, sigma2 = _class_stats(xn)
    sw = sigma1 + sigma2
    diff = mu1 - mu2
    sb = np.outer(diff, diff)

    if not np.any(diff):
        warnings.warn("class means coincide; discriminant direction is arbitrary",
                      RuntimeWarning, stacklevel=2)
        w = np.zeros(d)
        w[0] = 1.0
        z0 = float(w @ mu1)
        return (LdaModel(w, z0, class_pos, class_neg),
                FitReport(mu1, mu2, sw, sb, 0.0))

    scale = np.trace(sw) / d
    if not scale > 0:
        raise DegenerateScatter("within-class scatter is zero; cannot regularize")
    try:
        w = np.linalg.solve(sw + ridge * scale * np.eye(d), diff)
    except np.linalg.LinAlgError as exc:
        raise DegenerateScatter(f"within-class scatter is singular: {exc}") from None
    norm = np.linalg.norm(w)
    if not np.isfinite(norm) or norm == 0:
        raise DegenerateScatter("discriminant direction is not finite")
    w = w / norm
    z0 = float((w @ mu1 + w @ mu2) / 2.0)
    report = FitReport(mu1, mu2, sw, sb, fisher_criterion(w, sb, sw))
    return LdaModel(w, z0, class_pos, class_neg), report


def project(model: LdaModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise DimMismatch(f"model has {model.n_features} features, input has {x.shape[-1]}")
    return x @ model.w


def classify_lda(model: LdaModel, x) -> int:
    """``class_pos`` when the projection reaches the threshold (inclusive)."""
    return model.class_pos if project(model, x) >= model.z0 else model.class_neg


class FisherLDA(ClassifierMixin, BaseEstimator):
    """Fisher discriminant with a midpoint threshold.

    Parameters
    ----------
    pos_class : int, optional
        Label treated as class 1 (projects above the threshold). Defaults
        to the smaller of the two labels.
    ridge : float
        Relative ridge added to the within-class scatter before solving.
    """

    def __init__(self, pos_class=None, ridge=RIDGE):
        self.pos_class = pos_class
        self.ridge = ridge

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"FisherLDA needs exactly 2 classes, got {len(self.classes_)}")
        pos = self.classes_[0] if self.pos_class is None else self.pos_class
        if pos not in self.classes_:
            raise ValueError(f"pos_class {pos} not among labels {self.classes_}")
        neg = self.classes_[self.classes_ != pos][0]
        self.model_, self.report_ = fit_lda(X[y == pos], X[y == neg],
                                            int(pos), int(neg), self.ridge)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return project(self.model_, X) - self.model_.z0

    def predict(self, X):
        check_is_fitted(self, "model_")
        z = project(self.model_, check_array(X))
        return np.where(z >= self.model_.z0, self.model_.class_pos, self.model_.class_neg)

    @property
    def coef_(self):
        return self.model_.w
