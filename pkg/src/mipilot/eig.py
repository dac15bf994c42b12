"""Cyclic Jacobi eigensolver for small real symmetric matrices."""
import math

import numpy as np

from .errors import NoConvergence

TOL = 1e-12
MAX_SWEEPS = 50


def off_norm(a: np.ndarray) -> float:
    """Frobenius norm of the off-diagonal part."""
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def jacobi_eigh(a, tol: float = TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigenvalues and eigenvectors of a symmetric matrix.

    Sweeps over every (p, q) pair in row order, annihilating ``a[p, q]``
    with a plane rotation, until the off-diagonal Frobenius norm drops
    below ``tol`` (scaled by ``max(1, ‖a‖_F)``) or ``max_sweeps`` is hit.

    Returns ``(w, v)`` with ``a @ v[:, i] == w[i] * v[:, i]``; the order is
    whatever the sweeps leave on the diagonal (callers sort).
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    for _ in range(max_sweeps):
        if off_norm(a) < threshold:
            return a.diagonal().copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app, aqq = a[p, p], a[q, q]
                if abs(apq) * 1e18 < abs(aqq - app):
                    # rotation angle below double resolution
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                # smaller root keeps the rotation angle <= pi/4
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    if off_norm(a) < threshold:
        return a.diagonal().copy(), v
    raise NoConvergence(
        f"Jacobi did not converge in {max_sweeps} sweeps (off-norm {off_norm(a):.3e})")
