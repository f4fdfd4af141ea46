"""Small dense linear algebra: Jacobi eigensolver and singular values.

Sizes here are small (d up to ~100), so a cyclic Jacobi sweep is accurate
and simple enough to own outright.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NonFinite

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
INVERTIBLE_RTOL = 1e-10


def _square(m, name="matrix"):
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameter(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} has non-finite entries")
    return a


def jacobi_eigh(s, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvectors as the matching columns.
    """
    a = _square(s).copy()
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    v = np.eye(d)
    scale = max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class SingularValues:
    values: tuple

    @property
    def max(self):
        return self.values[0] if self.values else 0.0

    @property
    def min(self):
        return self.values[-1] if self.values else 0.0

    @property
    def is_invertible(self):
        return self.max > 0 and self.min > INVERTIBLE_RTOL * self.max


def singular_values(m):
    """Singular values of a square matrix, descending.

    Computed as square roots of the eigenvalues of ``m.T @ m``.

    >>> singular_values([[3.0, 0.0], [0.0, -2.0]]).values
    (3.0, 2.0)
    """
    a = _square(m)
    w, _ = jacobi_eigh(a.T @ a)
    w = np.sqrt(np.clip(w, 0.0, None))
    return SingularValues(tuple(float(x) for x in w))


def is_orthogonal(m, tol=1e-10):
    a = _square(m)
    eye = np.eye(a.shape[0])
    return bool(max(np.max(np.abs(a.T @ a - eye)), np.max(np.abs(a @ a.T - eye))) <= tol)


def rotation(theta):
    """2-D rotation matrix by angle ``theta`` (counter-clockwise)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])
