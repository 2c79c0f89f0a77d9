"""Geometry of the feasible output region.

For a pair of outputs (S1, S2) the region is the image of the current disk
|I| <= i_max under two isotropic quadratic maps.  Because both maps share the
``alpha * |I|^2`` structure, any linear functional of the pair is again
``gamma * |I|^2 + d . I + k`` and its maximum over the disk is a 1-D problem in
the radius.  That gives the support function in closed form, which drives
boundary sampling, membership and the Frank-Wolfe oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DqVector, InverterParams, LemmaForm, lemma_form, pair_maps, pair_outputs


class DomainError(ValueError):
    """Inputs outside the unit disk or lambda outside [0, 1]."""


@dataclass(frozen=True)
class SupportResult:
    value: float
    maximizer_current: DqVector


@dataclass(frozen=True)
class BoundaryPolyline:
    """Counter-clockwise boundary samples of a feasible region."""

    s1: np.ndarray
    s2: np.ndarray
    preimages: np.ndarray  # (n, 2) currents in A

    def __len__(self):
        return len(self.s1)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.s1, self.s2])

    def is_convex(self, tol: float = 1e-9) -> bool:
        """All turns share a sign (up to ``tol`` relative to the edge lengths)."""
        pts = self.points
        e = np.roll(pts, -1, axis=0) - pts
        e_next = np.roll(e, -1, axis=0)
        cross = e[:, 0] * e_next[:, 1] - e[:, 1] * e_next[:, 0]
        norm = np.linalg.norm(e, axis=1) * np.linalg.norm(e_next, axis=1)
        return bool(np.all(cross >= -tol * norm) or np.all(cross <= tol * norm))


def _direction(direction) -> np.ndarray:
    if np.isscalar(direction):
        return np.array([math.cos(direction), math.sin(direction)])
    return np.asarray(direction, dtype=float)


def support(params: InverterParams, pair, direction) -> SupportResult:
    """max over |I| <= i_max of theta . (S1(I), S2(I)).

    ``direction`` is an angle in radians or a 2-vector; vectors are not
    normalised, so the value scales with their length.
    """
    theta = _direction(direction)
    m1, m2 = pair_maps(params, pair)
    gamma = theta[0] * m1.alpha + theta[1] * m2.alpha
    d = theta[0] * m1.a_vec.to_array() + theta[1] * m2.a_vec.to_array()
    k = theta[0] * m1.offset + theta[1] * m2.offset
    dn = math.hypot(d[0], d[1])

    rho = params.i_max
    if gamma < 0.0:
        rho = min(params.i_max, dn / (-2.0 * gamma))
    u = d / dn if dn > 0.0 else np.array([1.0, 0.0])
    value = gamma * rho * rho + dn * rho + k
    return SupportResult(float(value), DqVector.from_array(rho * u))


def support_batch(params: InverterParams, pair, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`support` over angles; returns (values, maximizers (n, 2))."""
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    m1, m2 = pair_maps(params, pair)
    gamma = dirs[:, 0] * m1.alpha + dirs[:, 1] * m2.alpha
    d = np.outer(dirs[:, 0], m1.a_vec.to_array()) + np.outer(dirs[:, 1], m2.a_vec.to_array())
    k = dirs[:, 0] * m1.offset + dirs[:, 1] * m2.offset
    dn = np.hypot(d[:, 0], d[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(gamma < 0.0, np.minimum(params.i_max, dn / (-2.0 * gamma)), params.i_max)
        u = np.where(dn[:, None] > 0.0, d / dn[:, None], np.array([1.0, 0.0]))
    values = gamma * rho**2 + dn * rho + k
    return values, rho[:, None] * u


def boundary(params: InverterParams, pair, n_samples: int = 360) -> BoundaryPolyline:
    if n_samples < 4:
        raise ValueError("n_samples must be at least 4")
    thetas = 2.0 * np.pi * np.arange(n_samples) / n_samples
    _, currents = support_batch(params, pair, thetas)
    pts = pair_outputs(params, pair, currents)

    scale = max(1.0, float(np.max(np.abs(pts))))
    keep = [0]
    for i in range(1, n_samples):
        if np.max(np.abs(pts[i] - pts[keep[-1]])) > 1e-9 * scale:
            keep.append(i)
    while len(keep) > 1 and np.max(np.abs(pts[keep[-1]] - pts[keep[0]])) <= 1e-9 * scale:
        keep.pop()
    keep = np.array(keep)
    return BoundaryPolyline(pts[keep, 0], pts[keep, 1], currents[keep])


def contains(params: InverterParams, pair, point, tol: float = 1e-9, n_dirs: int = 720) -> bool:
    """Membership by supporting half-planes, refined near the tightest direction."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = np.asarray(point, dtype=float)

    def excess(thetas):
        h, _ = support_batch(params, pair, thetas)
        proj = p[0] * np.cos(thetas) + p[1] * np.sin(thetas)
        return proj - h - tol * np.maximum(1.0, np.abs(h))

    thetas = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    ex = excess(thetas)
    if np.any(ex > 0.0):
        return False
    # the worst sampled direction brackets the true one; zoom in 8x per level
    best = float(thetas[np.argmax(ex)])
    width = 2.0 * np.pi / n_dirs
    for _ in range(6):
        local = best + np.linspace(-width, width, 17)
        ex = excess(local)
        if np.any(ex > 0.0):
            return False
        best = float(local[np.argmax(ex)])
        width /= 8.0
    return True


def _stable_positive_root(a: float, b: float, c: float) -> float:
    """Non-negative root of a mu^2 + b mu + c = 0 with a >= 0, c <= 0."""
    if a < 1e-14:
        return -c / b
    disc = max(b * b - 4.0 * a * c, 0.0)
    if b >= 0.0:
        q = -0.5 * (b + math.sqrt(disc))
        return c / q if q != 0.0 else 0.0
    return 0.5 * (-b + math.sqrt(disc)) / a


def convex_combination_preimage(lf: LemmaForm, x1, x2, lam: float) -> DqVector:
    """A point y of the unit disk whose image is the lam-combination of the images of x1, x2.

    Works in the affine-normalised picture where the image of x is |x|^2 c + x;
    y = mu c + z with mu the positive root of the scalar quadratic that
    matches the |.|^2 coefficient.
    """
    x1 = np.asarray(tuple(x1), dtype=float)
    x2 = np.asarray(tuple(x2), dtype=float)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda={lam} outside [0, 1]")
    n1, n2 = float(x1 @ x1), float(x2 @ x2)
    if n1 > 1.0 + 1e-9 or n2 > 1.0 + 1e-9:
        raise DomainError("endpoints must lie in the unit disk")
    if lam == 1.0:
        return DqVector.from_array(x1)
    if lam == 0.0:
        return DqVector.from_array(x2)

    c = lf.c_vec.to_array()
    z = lam * x1 + (1.0 - lam) * x2
    zeta = lam * n1 + (1.0 - lam) * n2
    cc = float(c @ c)
    mu = _stable_positive_root(cc, 2.0 * float(c @ z) + 1.0, min(float(z @ z) - zeta, 0.0))
    y = mu * c + z
    ny = math.hypot(y[0], y[1])
    if ny > 1.0:
        # only round-off can put y outside; the root lies below the disk bound
        y = y / ny
    return DqVector.from_array(y)


def root_bracket_residual(lf: LemmaForm, x1, x2, lam: float) -> float:
    """|y|^2 - 1 at the chosen root; non-positive when the root sits inside [mu_lo, mu_hi]."""
    x1 = np.asarray(tuple(x1), dtype=float)
    x2 = np.asarray(tuple(x2), dtype=float)
    c = lf.c_vec.to_array()
    z = lam * x1 + (1.0 - lam) * x2
    zeta = lam * float(x1 @ x1) + (1.0 - lam) * float(x2 @ x2)
    mu = _stable_positive_root(float(c @ c), 2.0 * float(c @ z) + 1.0, min(float(z @ z) - zeta, 0.0))
    y = mu * c + z
    return float(y @ y) - 1.0


def midpoint_witness(params: InverterParams, pair, i1, i2, lam: float, lf: LemmaForm | None = None) -> DqVector:
    """Current whose output pair is lam * out(i1) + (1 - lam) * out(i2)."""
    if lf is None:
        lf = lemma_form(params, *pair)
    s = params.i_max
    x1 = np.asarray(tuple(i1), dtype=float) / s
    x2 = np.asarray(tuple(i2), dtype=float) / s
    y = convex_combination_preimage(lf, x1, x2, lam)
    return DqVector(y.d * s, y.q * s)


def midpoint_witness_batch(params: InverterParams, pair, i1, i2, lam, lf: LemmaForm | None = None) -> np.ndarray:
    """Vectorised :func:`midpoint_witness` over rows of ``i1``, ``i2`` (shape (n, 2)) and ``lam`` (shape (n,))."""
    if lf is None:
        lf = lemma_form(params, *pair)
    s = params.i_max
    x1 = np.atleast_2d(np.asarray(i1, dtype=float)) / s
    x2 = np.atleast_2d(np.asarray(i2, dtype=float)) / s
    lam = np.broadcast_to(np.asarray(lam, dtype=float), x1.shape[:1])
    if np.any((lam < 0.0) | (lam > 1.0)):
        raise DomainError("lambda outside [0, 1]")
    n1 = np.sum(x1 * x1, axis=1)
    n2 = np.sum(x2 * x2, axis=1)
    if np.any(n1 > 1.0 + 1e-9) or np.any(n2 > 1.0 + 1e-9):
        raise DomainError("endpoints must lie in the current disk")

    c = lf.c_vec.to_array()
    z = lam[:, None] * x1 + (1.0 - lam)[:, None] * x2
    zeta = lam * n1 + (1.0 - lam) * n2
    a = float(c @ c)
    b = 2.0 * (z @ c) + 1.0
    cc = np.minimum(np.sum(z * z, axis=1) - zeta, 0.0)
    if a < 1e-14:
        mu = -cc / b
    else:
        disc = np.sqrt(np.maximum(b * b - 4.0 * a * cc, 0.0))
        q = -0.5 * (b + np.where(b >= 0.0, disc, -disc))
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(b >= 0.0, np.where(q != 0.0, cc / q, 0.0), q / a)
    y = mu[:, None] * c + z
    ny = np.hypot(y[:, 0], y[:, 1])
    y = np.where((ny > 1.0)[:, None], y / np.maximum(ny, 1.0)[:, None], y)
    # the endpoints themselves are exact witnesses
    y = np.where((lam == 1.0)[:, None], x1, np.where((lam == 0.0)[:, None], x2, y))
    return y * s
