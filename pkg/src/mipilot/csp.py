"""Common spatial pattern filters and log-variance features."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .eig import jacobi_eigh
from .errors import BadM, ChannelMismatch, DegenerateVariance, EmptyClass, RankDeficient
from .signal import EegTrial, SpatialCovariance, as_trial_array, normalized_covariance

DEFAULT_PAIRS = 3
RANK_TOL = 1e-10
VAR_FLOOR = 1e-30


@dataclass(frozen=True)
class CspModel:
    """Fitted filter bank.

    ``w_full`` holds every filter as a column, ordered by descending
    eigenvalue; ``w_csp`` keeps the first and last ``m`` of them as rows.
    ``w_full``, ``whitener`` and ``rotation`` are None for models loaded
    from a file, which only stores what projection needs.
    """

    w_csp: np.ndarray
    eigenvalues: np.ndarray
    m: int
    w_full: Optional[np.ndarray] = None
    whitener: Optional[np.ndarray] = None
    rotation: Optional[np.ndarray] = None

    @property
    def n_channels(self) -> int:
        return self.w_csp.shape[1]

    @property
    def n_features(self) -> int:
        return 2 * self.m


def _sign_fix(w: np.ndarray) -> np.ndarray:
    """+1/-1 per column so that the largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(w), axis=0)
    signs = np.sign(w[idx, np.arange(w.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def fit_csp(sigma1: SpatialCovariance, sigma2: SpatialCovariance,
            m: int = DEFAULT_PAIRS) -> CspModel:
    """Jointly diagonalize two class covariances.

    Whitens the composite covariance, rotates onto the eigenvectors of the
    whitened class-1 covariance and keeps the ``m`` filters at each end of
    the spectrum.
    """
    s1 = np.asarray(getattr(sigma1, "matrix", sigma1), dtype=np.float64)
    s2 = np.asarray(getattr(sigma2, "matrix", sigma2), dtype=np.float64)
    if s1.shape != s2.shape or s1.ndim != 2 or s1.shape[0] != s1.shape[1]:
        raise ChannelMismatch(f"covariance shapes differ: {s1.shape} vs {s2.shape}")
    ch = s1.shape[0]
    if m < 1 or 2 * m > ch:
        raise BadM(f"need 1 <= m and 2m <= {ch}, got m={m}")

    d, u = jacobi_eigh(s1 + s2)
    floor = RANK_TOL * d.max()
    if d.min() < floor or d.max() <= 0:
        raise RankDeficient(
            f"composite covariance eigenvalue {d.min():.3e} below rank tolerance {floor:.3e}")
    whitener = (u / np.sqrt(d)).T
    s1_white = whitener @ s1 @ whitener.T
    lam, rotation = jacobi_eigh((s1_white + s1_white.T) / 2.0)

    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    rotation = rotation[:, order]
    w_full = whitener.T @ rotation
    signs = _sign_fix(w_full)
    w_full = w_full * signs
    rotation = rotation * signs

    keep = np.r_[0:m, ch - m:ch]
    w_csp = np.ascontiguousarray(w_full[:, keep].T)
    return CspModel(w_csp=w_csp, eigenvalues=lam, m=m, w_full=w_full,
                    whitener=whitener, rotation=rotation)


def apply_csp(model: CspModel, trial) -> np.ndarray:
    """Project a trial (or a raw channels x time matrix) onto the filters."""
    samples = trial.samples if isinstance(trial, EegTrial) else np.asarray(trial, dtype=np.float64)
    if samples.shape[-2] != model.n_channels:
        raise ChannelMismatch(
            f"model expects {model.n_channels} channels, trial has {samples.shape[-2]}")
    return model.w_csp @ samples


def extract_features(filtered) -> np.ndarray:
    """Log of each component's share of the total variance."""
    s = np.asarray(filtered, dtype=np.float64)
    if s.shape[-1] < 2:
        raise DegenerateVariance("need at least 2 samples per component")
    var = s.var(axis=-1)
    total = var.sum(axis=-1, keepdims=True)
    if np.any(total < VAR_FLOOR):
        raise DegenerateVariance(f"total variance below floor {VAR_FLOOR:g}")
    if np.any(var <= 0):
        raise DegenerateVariance("a component has zero variance")
    return np.log(var / total)


def _group_labels(y, class_groups):
    labels = sorted(set(int(v) for v in y))
    if class_groups is not None:
        g1, g2 = (tuple(int(v) for v in g) for g in class_groups)
    elif len(labels) == 2:
        g1, g2 = (labels[0],), (labels[1],)
    else:
        # left-hand tasks (odd ids) against right-hand tasks (even ids)
        g1 = tuple(v for v in labels if v % 2 == 1)
        g2 = tuple(v for v in labels if v % 2 == 0)
    return g1, g2


def group_mean_covariance(X: np.ndarray, y, group) -> SpatialCovariance:
    mask = np.isin(np.asarray(y), group)
    if not mask.any():
        raise EmptyClass(f"no trial carries any of classes {group}")
    acc = np.zeros((X.shape[1], X.shape[1]))
    for x in X[mask]:
        acc += normalized_covariance(EegTrial(x)).matrix
    return SpatialCovariance(acc / mask.sum())


class CSP(TransformerMixin, BaseEstimator):
    """CSP log-variance feature extractor.

    Parameters
    ----------
    n_pairs : int
        Filters kept from each end of the spectrum; output has
        ``2 * n_pairs`` features.
    class_groups : pair of label tuples, optional
        Labels pooled into each side of the two-class problem. With two
        labels the smaller one is side 1; with more, odd task ids (left
        hand) are pooled against even ones (right hand).
    """

    def __init__(self, n_pairs=DEFAULT_PAIRS, class_groups=None):
        self.n_pairs = n_pairs
        self.class_groups = class_groups

    def fit(self, X, y):
        X = as_trial_array(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} trials but {len(y)} labels")
        self.groups_ = _group_labels(y, self.class_groups)
        sigma1 = group_mean_covariance(X, y, self.groups_[0])
        sigma2 = group_mean_covariance(X, y, self.groups_[1])
        self.model_ = fit_csp(sigma1, sigma2, self.n_pairs)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = as_trial_array(X)
        return extract_features(apply_csp(self.model_, X))

    @property
    def filters_(self):
        return self.model_.w_csp
