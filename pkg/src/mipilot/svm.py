"""Polynomial-kernel SVM trained in the dual with SMO, plus one-vs-one voting."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DimMismatch, EmptyClass, InvalidSpec, NoConvergence, SingleClass

DEFAULT_DEGREE = 2
DEFAULT_C_CAP = 1e6
TOL = 1e-6
MAX_ITER = 100_000
ALPHA_TOL = 1e-12
TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    degree: int = DEFAULT_DEGREE

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise InvalidSpec(f"kernel degree must be a positive integer, got {self.degree}")

    def __call__(self, x, y):
        return kernel_eval(x, y, self)

    def gram(self, a, b) -> np.ndarray:
        return (np.asarray(a) @ np.asarray(b).T + 1.0) ** self.degree


def kernel_eval(x, y, k: KernelSpec) -> float:
    """(xᵀy + 1)^degree."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise DimMismatch(f"kernel arguments differ in shape: {x.shape} vs {y.shape}")
    return float((x @ y + 1.0) ** k.degree)


@dataclass(frozen=True)
class BinarySvmModel:
    """Support vectors with labels ±1, their multipliers and the bias."""

    support_vectors: np.ndarray
    labels: np.ndarray
    alphas: np.ndarray
    bias: float
    kernel: KernelSpec = field(default_factory=KernelSpec)
    c_cap: float = DEFAULT_C_CAP
    dual_objective: float = float("nan")
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def n_support(self) -> int:
        return len(self.alphas)

    def weight_vector(self) -> np.ndarray:
        """Primal weights; only meaningful for a degree-1 kernel."""
        if self.kernel.degree != 1:
            raise InvalidSpec("primal weights exist only for the degree-1 kernel")
        return (self.alphas * self.labels) @ self.support_vectors


@dataclass
class SmoResult:
    alphas: np.ndarray
    gradient: np.ndarray
    n_iter: int
    gap: float


def dual_objective(alphas, y, gram) -> float:
    """Σα − ½ ΣΣ αᵢαⱼ yᵢyⱼ K(xᵢ, xⱼ)."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ gram @ ay)


def smo(gram: np.ndarray, y: np.ndarray, c_cap: float = DEFAULT_C_CAP,
        tol: float = TOL, max_iter: int = MAX_ITER) -> SmoResult:
    """Maximize the dual by pairwise updates on the maximal violating pair.

    Works on the equivalent minimization ½αᵀQα − Σα with Q = yyᵀ∘K,
    keeping Σ yᵢαᵢ = 0 and 0 ≤ α ≤ c_cap. Stops when the KKT gap between
    the best "up" and "down" candidates falls below ``tol``.
    """
    n = len(y)
    q = gram * np.outer(y, y)
    diag = np.diag(gram)
    alpha = np.zeros(n)
    grad = -np.ones(n)
    pos = y > 0

    for it in range(max_iter):
        below = alpha < c_cap
        above = alpha > 0
        up = (below & pos) | (above & ~pos)
        low = (below & ~pos) | (above & pos)
        score = -y * grad
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        gap = score[i] - score[j]
        if gap < tol:
            return SmoResult(alpha, grad, it, gap)

        curvature = diag[i] + diag[j] - 2.0 * gram[i, j]
        if curvature <= 0:
            curvature = TAU
        step = gap / curvature
        step = min(step, c_cap - alpha[i] if y[i] > 0 else alpha[i])
        step = min(step, alpha[j] if y[j] > 0 else c_cap - alpha[j])

        di = y[i] * step
        dj = -y[j] * step
        alpha[i] += di
        alpha[j] += dj
        # snap onto the box so the working sets stay exact
        for t in (i, j):
            if alpha[t] < 0.0:
                alpha[t] = 0.0
            elif alpha[t] > c_cap or c_cap - alpha[t] <= 4 * np.spacing(c_cap):
                alpha[t] = c_cap
        grad += q[:, i] * di + q[:, j] * dj

    raise NoConvergence(f"SMO did not reach tolerance {tol:g} in {max_iter} iterations")


def _bias(alpha, y, g, c_cap, tol):
    """Bias from the extreme decision values of each class.

    b = −(max_{y=−1} g + min_{y=+1} g)/2 over points below the cap, which
    is exact for a hard margin. It is kept only if every point then meets
    its margin condition to within ``tol``; otherwise the mean offset of
    the free support vectors is used, or with none the midpoint of the
    feasible interval.
    """
    r = y - g  # bias that puts each point exactly on its margin
    below = alpha < c_cap
    nonzero = alpha > 0
    pos, neg = y > 0, y < 0
    free = below & nonzero
    lo_set = (pos & below) | (neg & nonzero)
    hi_set = (neg & below) | (pos & nonzero)
    lo = r[lo_set].max() if lo_set.any() else -np.inf
    hi = r[hi_set].min() if hi_set.any() else np.inf
    if (below & neg).any() and (below & pos).any():
        b = -(g[below & neg].max() + g[below & pos].min()) / 2.0
        if lo - tol <= b <= hi + tol:
            return float(b)
    if free.any():
        return float(np.mean(r[free]))
    if np.isfinite(lo) and np.isfinite(hi):
        return float((lo + hi) / 2.0)
    return float(lo if np.isfinite(lo) else hi)


def fit_binary_svm(X, Y, kernel: KernelSpec = None, c_cap: float = DEFAULT_C_CAP,
                   tol: float = TOL, max_iter: int = MAX_ITER) -> BinarySvmModel:
    """Train one soft-capped dual SVM; labels must be ±1."""
    kernel = kernel or KernelSpec()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(Y, dtype=np.float64).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise DimMismatch(f"{len(X)} vectors but {len(y)} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise InvalidSpec("labels must be +1 or -1")
    if len(y) < 2 or np.all(y == y[0]):
        raise SingleClass("both +1 and -1 labels are required")
    if not c_cap > 0:
        raise InvalidSpec(f"c_cap must be positive, got {c_cap}")

    gram = kernel.gram(X, X)
    res = smo(gram, y, c_cap, tol, max_iter)
    alpha = res.alphas
    g = gram @ (alpha * y)
    b = _bias(alpha, y, g, c_cap, tol)
    keep = alpha > ALPHA_TOL
    return BinarySvmModel(
        support_vectors=X[keep].copy(),
        labels=y[keep].copy(),
        alphas=alpha[keep].copy(),
        bias=b,
        kernel=kernel,
        c_cap=float(c_cap),
        dual_objective=dual_objective(alpha, y, gram),
        n_iter=res.n_iter,
    )


def decision_value(model: BinarySvmModel, x) -> float:
    """Σ αᵢyᵢK(xᵢ, x) + b (before taking the sign)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise DimMismatch(f"model has {model.n_features} features, input has {x.shape[-1]}")
    k = (x @ model.support_vectors.T + 1.0) ** model.kernel.degree
    return k @ (model.alphas * model.labels) + model.bias


def classify_binary(model: BinarySvmModel, x) -> int:
    return 1 if decision_value(model, x) >= 0 else -1


@dataclass(frozen=True)
class MultiClassSvmModel:
    """One binary machine per unordered class pair; pair[0] is the +1 side."""

    class_ids: tuple
    pairs: tuple
    machines: tuple

    def __post_init__(self):
        packed = np.concatenate([m.support_vectors for m in self.machines])
        coef = np.concatenate([m.alphas * m.labels for m in self.machines])
        bounds = np.cumsum([0] + [m.n_support for m in self.machines])
        object.__setattr__(self, "_packed", (packed, coef, bounds))

    @property
    def kernel(self) -> KernelSpec:
        return self.machines[0].kernel

    @property
    def n_features(self) -> int:
        return self.machines[0].n_features

    @property
    def n_support(self) -> int:
        return sum(m.n_support for m in self.machines)

    def decision_values(self, x) -> np.ndarray:
        """Decision value of every machine, one kernel pass over all vectors."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise DimMismatch(f"model has {self.n_features} features, input has {x.shape[-1]}")
        packed, coef, bounds = self._packed
        weighted = ((packed @ x + 1.0) ** self.kernel.degree) * coef
        sums = np.add.reduceat(weighted, bounds[:-1]) if len(weighted) else np.zeros(len(self.machines))
        return sums + np.array([m.bias for m in self.machines])


def _fit_pair(args):
    (a, b), xa, xb, kernel, c_cap, tol, max_iter = args
    X = np.vstack([xa, xb])
    y = np.r_[np.ones(len(xa)), -np.ones(len(xb))]
    try:
        return fit_binary_svm(X, y, kernel, c_cap, tol, max_iter)
    except (SingleClass, NoConvergence, DimMismatch) as exc:
        raise type(exc)(f"pair ({a}, {b}): {exc}") from exc


def fit_multiclass(features_by_class: dict, kernel: KernelSpec = None,
                   c_cap: float = DEFAULT_C_CAP, tol: float = TOL,
                   max_iter: int = MAX_ITER, workers: Optional[int] = None,
                   n_classes: int = 4) -> MultiClassSvmModel:
    """Train the six pairwise machines for four task classes.

    ``workers`` > 1 fits the pairs concurrently in a thread pool.
    """
    kernel = kernel or KernelSpec()
    class_ids = tuple(sorted(features_by_class))
    for c in class_ids:
        if len(features_by_class[c]) == 0:
            raise EmptyClass(f"class {c} has no samples")
        if len(features_by_class[c]) < 2:
            raise EmptyClass(f"class {c} needs >= 2 samples, has {len(features_by_class[c])}")
    if len(class_ids) != n_classes:
        raise EmptyClass(f"expected {n_classes} classes, got {len(class_ids)}: {class_ids}")
    pairs = tuple(itertools.combinations(class_ids, 2))
    jobs = [((a, b), np.asarray(features_by_class[a], dtype=np.float64),
             np.asarray(features_by_class[b], dtype=np.float64),
             kernel, c_cap, tol, max_iter) for a, b in pairs]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            machines = tuple(pool.map(_fit_pair, jobs))
    else:
        machines = tuple(map(_fit_pair, jobs))
    return MultiClassSvmModel(class_ids, pairs, machines)


def vote(model: MultiClassSvmModel, values) -> tuple:
    """Winning class and its vote margin over the runner-up.

    Ties on votes go to the larger summed |decision value| of the machines
    each tied class won, then to the lower class id.
    """
    votes = dict.fromkeys(model.class_ids, 0)
    strength = dict.fromkeys(model.class_ids, 0.0)
    for (a, b), v in zip(model.pairs, values):
        winner = a if v >= 0 else b
        votes[winner] += 1
        strength[winner] += abs(v)
    ranked = sorted(model.class_ids, key=lambda c: (-votes[c], -strength[c], c))
    best = ranked[0]
    margin = votes[best] - votes[ranked[1]] if len(ranked) > 1 else votes[best]
    return best, float(margin)


def predict_multiclass(model: MultiClassSvmModel, x) -> int:
    return vote(model, model.decision_values(x))[0]


class PolySVC(ClassifierMixin, BaseEstimator):
    """Polynomial-kernel SVM.

    Two labels train a single machine (the smaller label is +1); four
    labels train the one-vs-one ensemble.

    Parameters
    ----------
    degree : int
        Kernel degree.
    c_cap : float
        Upper bound on each multiplier; large values approach the hard margin.
    tol : float
        KKT gap at which SMO stops.
    max_iter : int
        SMO iteration budget per machine.
    workers : int, optional
        Threads used for the pairwise fits.
    """

    def __init__(self, degree=DEFAULT_DEGREE, c_cap=DEFAULT_C_CAP, tol=TOL,
                 max_iter=MAX_ITER, workers=None):
        self.degree = degree
        self.c_cap = c_cap
        self.tol = tol
        self.max_iter = max_iter
        self.workers = workers

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        kernel = KernelSpec(self.degree)
        if len(self.classes_) == 2:
            signs = np.where(y == self.classes_[0], 1.0, -1.0)
            self.model_ = fit_binary_svm(X, signs, kernel, self.c_cap, self.tol, self.max_iter)
        elif len(self.classes_) == 4:
            by_class = {int(c): X[y == c] for c in self.classes_}
            self.model_ = fit_multiclass(by_class, kernel, self.c_cap, self.tol,
                                         self.max_iter, self.workers)
        else:
            raise ValueError(f"PolySVC handles 2 or 4 classes, got {len(self.classes_)}")
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if isinstance(self.model_, BinarySvmModel):
            return decision_value(self.model_, X)
        return np.array([self.model_.decision_values(x) for x in X])

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if isinstance(self.model_, BinarySvmModel):
            v = decision_value(self.model_, X)
            return np.where(v >= 0, self.classes_[0], self.classes_[1])
        return np.array([predict_multiclass(self.model_, x) for x in X])
