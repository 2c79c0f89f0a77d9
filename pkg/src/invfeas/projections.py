"""Projections used by the lifted (3x3 Gram matrix) solver."""
from __future__ import annotations

import numpy as np


def is_psd3(a, tol: float = 0.0) -> bool:
    """Principal-minor test for a symmetric 3x3; cheaper than an eigensolve."""
    a00, a11, a22 = a[0, 0], a[1, 1], a[2, 2]
    a01, a02, a12 = a[0, 1], a[0, 2], a[1, 2]
    if a00 < -tol or a11 < -tol or a22 < -tol:
        return False
    if a00 * a11 - a01 * a01 < -tol or a00 * a22 - a02 * a02 < -tol or a11 * a22 - a12 * a12 < -tol:
        return False
    det = a00 * (a11 * a22 - a12 * a12) - a01 * (a01 * a22 - a12 * a02) + a02 * (a01 * a12 - a11 * a02)
    return det >= -tol


def project_psd(a: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm (negative eigenvalues clamped)."""
    a = 0.5 * (a + a.T)
    if is_psd3(a):
        return a
    w, v = np.linalg.eigh(a)
    return (v * np.maximum(w, 0.0)) @ v.T


def project_slice(a: np.ndarray, cap: float = 1.0) -> np.ndarray:
    """Nearest point of {W33 = 1, W11 + W22 <= cap}; both are affine in the entries."""
    out = a.copy()
    out[2, 2] = 1.0
    excess = out[0, 0] + out[1, 1] - cap
    if excess > 0.0:
        out[0, 0] -= 0.5 * excess
        out[1, 1] -= 0.5 * excess
    return out


class GramProjector:
    """Euclidean projection onto PSD ∩ {W33 = 1, W11 + W22 <= cap} by Dykstra's method.

    Plain alternating projections only find *a* point of the intersection;
    the Dykstra correction terms make the limit the Euclidean projection,
    which projected gradient needs.  The corrections are dual variables, so
    they are carried between calls: consecutive inputs in an iterative solver
    are close, and a warm start usually converges in one or two rounds.
    """

    def __init__(self, cap: float = 1.0, rounds: int = 500, tol: float = 1e-13):
        self.cap = cap
        self.rounds = rounds
        self.tol = tol
        self.p = np.zeros((3, 3))
        self.q = np.zeros((3, 3))
        self.last_rounds = 0

    def __call__(self, a: np.ndarray) -> np.ndarray:
        p, q = self.p, self.q
        x = a - p - q
        for k in range(self.rounds):
            y = project_slice(x + p, self.cap)
            p = x + p - y
            x_new = project_psd(y + q)
            q = y + q - x_new
            done = np.max(np.abs(x_new - x)) <= self.tol * (1.0 + np.max(np.abs(x_new)))
            x = x_new
            if done:
                break
        self.p, self.q = p, q
        self.last_rounds = k + 1
        # land on the slice so W33 = 1 holds exactly; the PSD defect is O(tol)
        return project_slice(x, self.cap)


def project_gram(a: np.ndarray, cap: float = 1.0, rounds: int = 500) -> np.ndarray:
    """Cold-start projection onto the Gram-matrix feasible set."""
    return GramProjector(cap, rounds)(a)
