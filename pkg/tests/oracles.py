"""Independent reference computations shared by the unit and acceptance tests."""
import itertools

import numpy as np

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def poly_gram(X, degree):
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    k = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            k[i, j] = (sum(a * b for a, b in zip(X[i], X[j])) + 1.0) ** degree
    return k


def dual_value(alpha, y, gram):
    ay = alpha * y
    return alpha.sum() - 0.5 * ay @ gram @ ay


def brute_force_dual(X, y, degree, c_cap):
    """Maximum of the SVM dual by enumerating which multipliers are zero, free or capped.

    For each assignment the free multipliers solve the equality-constrained
    stationarity system; feasible candidates are scored and the best kept.
    Returns ``(best value, best alpha)``.
    """
    y = np.asarray(y, dtype=np.float64)
    gram = poly_gram(X, degree)
    q = gram * np.outer(y, y)
    n = len(y)
    states = (0, 1, 2) if np.isfinite(c_cap) else (0, 1)
    scale = max(1.0, c_cap if np.isfinite(c_cap) else 1.0)
    best, best_alpha = -np.inf, None
    for status in itertools.product(states, repeat=n):
        status = np.array(status)
        free = status == 1
        alpha = np.where(status == 2, c_cap, 0.0).astype(np.float64)
        fixed_sum = y[~free] @ alpha[~free]
        nf = int(free.sum())
        if nf:
            a = np.zeros((nf + 1, nf + 1))
            a[:nf, :nf] = q[np.ix_(free, free)]
            a[:nf, nf] = y[free]
            a[nf, :nf] = y[free]
            rhs = np.r_[1.0 - q[np.ix_(free, ~free)] @ alpha[~free], -fixed_sum]
            sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
            if np.max(np.abs(a @ sol - rhs)) > 1e-8 * max(1.0, np.abs(rhs).max()):
                continue
            alpha[free] = sol[:nf]
        if abs(y @ alpha) > 1e-9 * scale:
            continue
        if alpha.min() < -1e-9 * scale or alpha.max() > c_cap + 1e-9 * scale:
            continue
        alpha = np.clip(alpha, 0.0, c_cap)
        value = dual_value(alpha, y, gram)
        if value > best:
            best, best_alpha = value, alpha
    return best, best_alpha


def full_alphas(model, X):
    """Multiplier of every training row (0 for rows that are not support vectors)."""
    alpha = np.zeros(len(X))
    for sv, a in zip(model.support_vectors, model.alphas):
        hits = np.flatnonzero(np.all(X == sv, axis=1))
        alpha[hits[0]] = a
    return alpha


def kkt_residual(model, X, y):
    """Largest violation of the margin conditions over the training set."""
    alpha = full_alphas(model, X)
    k = (X @ model.support_vectors.T + 1.0) ** model.kernel.degree
    yf = y * (k @ (model.alphas * model.labels) + model.bias)
    worst = 0.0
    for a, m in zip(alpha, yf):
        if a <= 0.0:
            worst = max(worst, 1.0 - m)
        elif a >= model.c_cap:
            worst = max(worst, m - 1.0)
        else:
            worst = max(worst, abs(m - 1.0))
    return worst


def random_svm_sets(seed, count):
    """Small labeled sets with both classes present, n <= 8."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        X = rng.uniform(-1, 1, (n, d))
        y = rng.choice([-1.0, 1.0], n)
        if len(set(y)) < 2:
            continue
        degree = int(rng.integers(1, 4))
        c_cap = float(rng.choice([0.5, 1.0, 5.0, 50.0]))
        out.append((X, y, degree, c_cap))
    return out


def two_pass_variance(window):
    """Population variance per column: mean first, then squared deviations."""
    mean = window.mean(axis=0)
    return ((window - mean) ** 2).mean(axis=0)
