"""Setpoint tracking over the feasible output region.

Three independent routes to the same optimum:

* :func:`solve_sdp` works on the 3x3 Gram lift W = [I; 1][I; 1]^T, where each
  output is linear, Tr(M W), and the current disk becomes an LMI.  Solved by
  accelerated projected gradient; the current is read off W[:2, 2].
* :func:`solve_frank_wolfe` stays in output space and uses the closed-form
  support function as its linear oracle.
* :func:`brute_force` scans a polar grid of currents and polishes locally.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from . import region
from .model import (
    DqVector,
    InverterParams,
    OutputQuantity,
    check_pair,
    lemma_form,
    pair_outputs,
    quadratic_map,
)
from .projections import GramProjector


class NotConverged(RuntimeError):
    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


class Method(enum.Enum):
    SDP = "sdp"
    FRANK_WOLFE = "fw"
    GRID = "grid"


@dataclass(frozen=True)
class TrackingObjective:
    """f(S1, S2) = 1/2 (S1 - target1)^2 + gamma/2 (S2 - target2)^2."""

    target1: float
    target2: float
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be non-negative, got {self.gamma!r}")

    def value(self, s1, s2):
        return 0.5 * (s1 - self.target1) ** 2 + 0.5 * self.gamma * (s2 - self.target2) ** 2

    def value_and_grad(self, s):
        r1 = s[0] - self.target1
        r2 = s[1] - self.target2
        f = 0.5 * r1 * r1 + 0.5 * self.gamma * r2 * r2
        return f, np.array([r1, self.gamma * r2])


@dataclass(frozen=True)
class GramMatrix:
    w: np.ndarray

    def violations(self, i_max: float, tol: float = 1e-9) -> list[str]:
        w = self.w
        out = []
        if np.max(np.abs(w - w.T)) > 1e-12 * max(1.0, np.max(np.abs(w))):
            out.append("not symmetric")
        if abs(w[2, 2] - 1.0) > tol:
            out.append("W33 != 1")
        if w[0, 0] + w[1, 1] > i_max**2 * (1.0 + tol):
            out.append("trace cap exceeded")
        if np.linalg.eigvalsh(w)[0] < -tol * np.trace(w):
            out.append("not PSD")
        return out

    @classmethod
    def from_current(cls, i_bar) -> "GramMatrix":
        v = np.array([*tuple(i_bar), 1.0])
        return cls(np.outer(v, v))


@dataclass(frozen=True)
class MomentMatrix:
    m: np.ndarray

    def value(self, w) -> float:
        return float(np.sum(self.m * np.asarray(w)))


@dataclass
class SolveReport:
    s1: float
    s2: float
    i_star: DqVector
    objective: float
    method: Method
    iterations: int = 0
    rank1_residual: float = 0.0
    w_star: Optional[GramMatrix] = None
    raw_rank1_residual: float = 0.0  # before any regularised re-solve
    regularized: bool = False
    degraded: bool = False  # rank-1 fit had to fall back to the quadratic lift
    converged: bool = True
    kkt_residual: float = 0.0
    history: list = field(default_factory=list, repr=False)


def build_moment_matrix(params: InverterParams, q: OutputQuantity) -> MomentMatrix:
    """Tr(M W(I)) reproduces the output q at current I."""
    qm = quadratic_map(params, q)
    m = np.zeros((3, 3))
    m[0, 0] = m[1, 1] = qm.alpha
    m[:2, 2] = m[2, :2] = 0.5 * qm.a_vec.to_array()
    m[2, 2] = qm.offset
    return MomentMatrix(m)


def _normalised_moments(params: InverterParams, pair):
    d = np.diag([params.i_max, params.i_max, 1.0])
    return [d @ build_moment_matrix(params, q).m @ d for q in pair]


def objective_scale(params: InverterParams, pair, gamma: float) -> float:
    """Curvature of the tracking objective over the normalised Gram matrix.

    Largest eigenvalue of the Hessian f''(W) restricted to the free entries;
    it is both the gradient Lipschitz constant and the natural unit for
    objective changes over the feasible set.
    """
    m1, m2 = _normalised_moments(params, pair)
    m1[2, 2] = m2[2, 2] = 0.0
    g12 = math.sqrt(gamma) * float(np.sum(m1 * m2))
    gram = np.array([[np.sum(m1 * m1), g12], [g12, gamma * np.sum(m2 * m2)]])
    return float(np.linalg.eigvalsh(gram)[-1])


def _report_from_current(params, pair, obj, i_bar, method, **extra) -> SolveReport:
    s = pair_outputs(params, pair, np.asarray(tuple(i_bar), dtype=float))
    return SolveReport(
        s1=float(s[0]),
        s2=float(s[1]),
        i_star=DqVector.from_array(tuple(i_bar)),
        objective=float(obj.value(s[0], s[1])),
        method=method,
        **extra,
    )


# --------------------------------------------------------------------------- SDP


def _projected_gradient(m1, m2, obj, lf, w0, reg=0.0, max_iter=100_000, rel_tol=1e-10, abs_tol=1e-12):
    """Accelerated projected gradient on the normalised lift.

    Returns (W, iterations, kkt_residual, objective history).  Momentum is reset whenever the
    objective goes up (function-value restart), which keeps the method
    monotone and linear-rate on this problem.  Stops once 20 iterations
    gain less than ``rel_tol * f + abs_tol``.
    """
    t1, t2, gamma = obj.target1, obj.target2, obj.gamma
    proj = GramProjector()
    eye = np.eye(3)

    def f(w):
        r1 = float(np.sum(m1 * w)) - t1
        r2 = float(np.sum(m2 * w)) - t2
        return 0.5 * r1 * r1 + 0.5 * gamma * r2 * r2 + reg * (w[0, 0] + w[1, 1] + w[2, 2]), r1, r2

    def grad(r1, r2):
        g = r1 * m1 + gamma * r2 * m2
        return g + reg * eye if reg else g

    w = proj(w0)
    fw = f(w)[0]
    y = w.copy()
    tk = 1.0
    hist = [fw]
    k = 0
    for k in range(1, max_iter + 1):
        _, r1, r2 = f(y)
        w_new = proj(y - grad(r1, r2) / lf)
        f_new = f(w_new)[0]
        if f_new > fw:
            y = w.copy()
            tk = 1.0
            hist.append(fw)
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
            y = w_new + ((tk - 1.0) / t_next) * (w_new - w)
            w, fw, tk = w_new, f_new, t_next
            hist.append(fw)
        if len(hist) > 20 and hist[-21] - hist[-1] < rel_tol * abs(fw) + abs_tol:
            break

    _, r1, r2 = f(w)
    step = GramProjector()(w - grad(r1, r2) / lf)
    kkt = lf * float(np.linalg.norm(w - step))
    return w, k, kkt, hist


def rank1_residual(w: np.ndarray) -> float:
    x = w[:2, 2]
    return float(np.linalg.norm(w[:2, :2] - np.outer(x, x)) / max(1.0, np.trace(w)))


def _lift_to_rank1(params, pair, w_phys) -> np.ndarray:
    """Current with exactly the outputs of a (possibly higher-rank) W.

    The outputs only see W through t = W11 + W22 and x = W[:2, 2], with
    |x|^2 <= t <= i_max^2.  In unit-disk coordinates this is the image point
    t c + x of the convexity construction, whose preimage is y = mu c + x.
    """
    lf = lemma_form(params, *pair)
    s = params.i_max
    x = w_phys[:2, 2] / s
    t = min((w_phys[0, 0] + w_phys[1, 1]) / s**2, 1.0)
    c = lf.c_vec.to_array()
    mu = region._stable_positive_root(float(c @ c), 2.0 * float(c @ x) + 1.0, min(float(x @ x) - t, 0.0))
    y = mu * c + x
    ny = float(np.hypot(*y))
    if ny > 1.0:
        y = y / ny
    return y * s


def extract_current(w, tol: float = 1e-6) -> tuple[DqVector, float]:
    """Read the current from a Gram matrix: I = (W13, W23).

    The residual measures how far the top-left block is from I I^T,
    relative to max(1, trace W).  The regularised re-solve and the fallbacks
    for a large residual live in :func:`solve_sdp`, which owns the problem
    data they need.
    """
    w = np.asarray(w.w if isinstance(w, GramMatrix) else w, dtype=float)
    return DqVector(float(w[0, 2]), float(w[1, 2])), rank1_residual(w)


def leading_eigenvector_fit(w) -> DqVector:
    """Best rank-1 approximation of W, scaled so the homogeneous coordinate is 1."""
    vals, vecs = np.linalg.eigh(np.asarray(w, dtype=float))
    v = vecs[:, -1] * math.sqrt(max(vals[-1], 0.0))
    if abs(v[2]) < 1e-300:
        return DqVector(0.0, 0.0)
    v = v / v[2]
    return DqVector(float(v[0]), float(v[1]))


def solve_sdp(
    params: InverterParams,
    pair,
    obj: TrackingObjective,
    *,
    max_iter: int = 100_000,
    rank_tol: float = 1e-6,
    regularize: bool = True,
    w0: Optional[np.ndarray] = None,
) -> SolveReport:
    """Minimise f(Tr(M1 W), Tr(M2 W)) over W >= 0, W33 = 1, W11 + W22 <= i_max^2.

    Internally W is rescaled by i_max so the trace cap reads <= 1.  When the
    solution is not rank 1 (interior targets have a whole segment of optimal
    W) the problem is re-solved once with a small trace penalty, which pushes
    W onto the rank-1 boundary of the lift.
    """
    pair = check_pair(pair)
    m1, m2 = _normalised_moments(params, pair)
    scale = objective_scale(params, pair, obj.gamma)
    lf = scale if scale > 0 else 1.0
    s = params.i_max
    unscale = np.diag([s, s, 1.0])

    start = np.diag([0.0, 0.0, 1.0]) if w0 is None else np.asarray(w0, dtype=float)
    w, iters, kkt, hist = _projected_gradient(m1, m2, obj, lf, start, max_iter=max_iter)
    w_phys = unscale @ w @ unscale
    raw_res = rank1_residual(w_phys)
    regularized = False
    degraded = False
    final_w = w_phys
    res = raw_res

    if raw_res > rank_tol and regularize:
        regularized = True
        w_reg, it_reg, _, hist_reg = _projected_gradient(
            m1, m2, obj, lf, w, reg=1e-6 * lf, max_iter=max_iter
        )
        iters += it_reg
        hist = hist + hist_reg
        w_reg_phys = unscale @ w_reg @ unscale
        res = rank1_residual(w_reg_phys)
        if res <= rank_tol:
            final_w = w_reg_phys

    if res <= rank_tol:
        i_star, _ = extract_current(final_w)
        # reading the current off a nearly rank-1 W (or one biased by the
        # penalty) loses accuracy; match the unpenalised optimum's outputs
        i_arr = _newton_match(params, pair, i_star.to_array(), np.array([np.sum(m1 * w), np.sum(m2 * w)]))
    else:
        degraded = True
        i_arr = _lift_to_rank1(params, pair, w_phys)
        if not np.all(np.isfinite(i_arr)):
            i_arr = leading_eigenvector_fit(w_phys).to_array()

    norm = float(np.hypot(*i_arr))
    if norm > params.i_max:
        i_arr = i_arr * (params.i_max / norm)

    report = _report_from_current(
        params,
        pair,
        obj,
        i_arr,
        Method.SDP,
        iterations=iters,
        rank1_residual=res,
        raw_rank1_residual=raw_res,
        w_star=GramMatrix(final_w),
        regularized=regularized,
        degraded=degraded,
        kkt_residual=kkt,
        history=[(float(v), math.nan) for v in hist],
    )
    if iters >= max_iter and kkt > 1e-5 * lf:
        report.converged = False
        raise NotConverged(f"projected gradient hit {max_iter} iterations (KKT residual {kkt:.3g})", report)
    return report


def _newton_match(params, pair, i0, target, steps: int = 8) -> np.ndarray:
    """Refine a current so its outputs hit ``target`` (2x2 Newton, kept in the disk)."""
    from .model import pair_maps

    m1, m2 = pair_maps(params, pair)
    a1, a2 = m1.a_vec.to_array(), m2.a_vec.to_array()
    i = np.array(i0, dtype=float)
    best = i.copy()
    best_err = np.inf
    for _ in range(steps + 1):
        out = np.array([m1(i), m2(i)])
        err = float(np.max(np.abs(out - target)))
        if err < best_err and np.hypot(*i) <= params.i_max * (1 + 1e-12):
            best, best_err = i.copy(), err
        if err == 0.0:
            break
        jac = np.array([2 * m1.alpha * i + a1, 2 * m2.alpha * i + a2])
        try:
            i = i - np.linalg.solve(jac, out - target)
        except np.linalg.LinAlgError:
            break
    return best


# --------------------------------------------------------------------------- Frank-Wolfe


def _tracking_triangle_step(obj, s, v, v_prev):
    """Barycentric weights (u, w) minimising the tracking objective over hull(s, v, v_prev).

    The objective is a diagonal quadratic, so this is a 2-variable QP: try
    the unconstrained minimiser, otherwise the best point on the three edges.
    """
    h = np.array([1.0, obj.gamma])
    g0 = obj.value_and_grad(s)[1]

    def f(u, w):
        p = s + u * (v - s) + w * (v_prev - s)
        return obj.value(p[0], p[1])

    def edge(p0, d):
        # minimise along p0 + eta d, eta in [0, 1]
        curv = float(d @ (h * d))
        slope = float(obj.value_and_grad(p0)[1] @ d)
        return 0.0 if curv <= 0 else min(1.0, max(0.0, -slope / curv))

    d1, d2 = v - s, v_prev - s
    hess = np.array([[d1 @ (h * d1), d1 @ (h * d2)], [d2 @ (h * d1), d2 @ (h * d2)]])
    rhs = -np.array([g0 @ d1, g0 @ d2])
    candidates = []
    if abs(np.linalg.det(hess)) > 1e-14 * (hess[0, 0] * hess[1, 1] + 1e-300):
        u, w = np.linalg.solve(hess, rhs)
        if u >= 0 and w >= 0 and u + w <= 1:
            candidates.append((u, w))
    eta = edge(s, d1)
    candidates.append((eta, 0.0))
    eta = edge(s, d2)
    candidates.append((0.0, eta))
    eta = edge(v_prev, v - v_prev)
    candidates.append((eta, 1.0 - eta))
    return min(candidates, key=lambda uw: f(*uw))


def solve_frank_wolfe(
    params: InverterParams,
    pair,
    obj,
    *,
    max_iter: int = 10_000,
    gap_tol: float = 1e-8,
    abs_gap_tol: float = 1e-7,
    step: str = "auto",
) -> SolveReport:
    """Conditional gradient over the (convex) output region.

    ``obj`` is a :class:`TrackingObjective` or anything exposing
    ``value_and_grad(s) -> (f, grad)`` for a convex f.  The linear oracle is the
    closed-form support function; the preimage current is carried along with
    the midpoint-witness construction, so every iterate is realised by a
    current inside the disk.  Stops when the duality gap, an upper bound on
    f - f*, drops below ``gap_tol * f + abs_gap_tol`` (for tracking objectives
    f >= 0 is used as a second bound).

    ``step``:

    * ``"open-loop"`` -- eta_k = 2 / (k + 2), works for any convex f;
    * ``"line"`` -- exact line search towards the new atom (tracking only);
    * ``"triangle"`` -- exact minimisation over the iterate and the two most
      recent atoms (tracking only).  Thin regions make plain steps zigzag
      between two faces; the extra atom removes that;
    * ``"auto"`` -- triangle for tracking objectives, open-loop otherwise.
    """
    pair = check_pair(pair)
    lf = lemma_form(params, *pair)
    is_tracking = isinstance(obj, TrackingObjective)
    if step == "auto":
        step = "triangle" if is_tracking else "open-loop"
    if step in ("line", "triangle") and not is_tracking:
        raise ValueError(f"{step} steps need a TrackingObjective")

    i_k = np.zeros(2)
    s_k = pair_outputs(params, pair, i_k)
    prev = None  # (current, output) of the previous atom
    gap = np.inf
    f = np.inf
    history = []
    k = 0
    for k in range(max_iter):
        f, g = obj.value_and_grad(s_k)
        if not np.any(g):
            gap = 0.0
            break
        i_v = region.support(params, pair, -g).maximizer_current.to_array()
        v = pair_outputs(params, pair, i_v)
        gap = float(-g @ (v - s_k))
        history.append((float(f), gap))
        # a tracking objective is >= 0, so f itself also bounds f - f*
        bound = min(gap, f) if is_tracking else gap
        if bound <= gap_tol * abs(f) + abs_gap_tol:
            break
        if step == "triangle" and prev is not None:
            u, w = _tracking_triangle_step(obj, s_k, v, prev[1])
            if u + w > 0:
                atom = region.midpoint_witness(params, pair, i_v, prev[0], u / (u + w), lf=lf).to_array()
                i_k = region.midpoint_witness(params, pair, atom, i_k, min(u + w, 1.0), lf=lf).to_array()
        else:
            if step == "open-loop":
                eta = 2.0 / (k + 2.0)
            else:
                d = v - s_k
                curv = d[0] ** 2 + obj.gamma * d[1] ** 2
                eta = 1.0 if curv <= 0 else min(1.0, max(0.0, gap / curv))
            i_k = region.midpoint_witness(params, pair, i_v, i_k, eta, lf=lf).to_array()
        prev = (i_v, v)
        s_k = pair_outputs(params, pair, i_k)

    report = _report_from_current(params, pair, obj if is_tracking else _Wrapped(obj), i_k, Method.FRANK_WOLFE)
    report.iterations = k + 1
    report.kkt_residual = float(gap)
    report.history = history
    bound = min(gap, f) if is_tracking else gap
    if bound > gap_tol * abs(f) + abs_gap_tol and k + 1 >= max_iter:
        report.converged = False
        raise NotConverged(f"Frank-Wolfe gap {gap:.3g} after {max_iter} iterations", report)
    return report


class _Wrapped:
    def __init__(self, obj):
        self.obj = obj

    def value(self, s1, s2):
        return self.obj.value_and_grad(np.array([s1, s2]))[0]


# --------------------------------------------------------------------------- grid oracle


def brute_force(
    params: InverterParams,
    pair,
    obj: TrackingObjective,
    grid_n: int = 401,
    levels: int = 20,
) -> SolveReport:
    """Polar grid over the current disk followed by a shrinking pattern search.

    The grid has ``grid_n`` radii and ``4 * grid_n`` angles.  The search
    works in (radius, angle), clamps the radius to [0, i_max] and halves its
    steps ``levels`` times, starting from the grid spacing.  Thin regions
    give long curved valleys where a pattern search crawls, so the result is
    finished with a bounded least-squares polish on the residual vector,
    kept only if it lowers f.
    """
    if grid_n < 101:
        raise ValueError("grid_n must be at least 101")
    pair = check_pair(pair)
    imax = params.i_max
    radii = np.linspace(0.0, imax, grid_n)
    angles = 2.0 * np.pi * np.arange(4 * grid_n) / (4 * grid_n)
    cos, sin = np.cos(angles), np.sin(angles)

    best_f = np.inf
    best = (0.0, 0.0)
    for j0 in range(0, grid_n, 256):
        rr = radii[j0 : j0 + 256, None]
        cur = np.stack([rr * cos, rr * sin], axis=-1)
        out = pair_outputs(params, pair, cur)
        f = obj.value(out[..., 0], out[..., 1])
        idx = np.unravel_index(np.argmin(f), f.shape)
        if f[idx] < best_f:
            best_f = float(f[idx])
            best = (float(radii[j0 + idx[0]]), float(angles[idx[1]]))

    def fval(r, a):
        s = pair_outputs(params, pair, np.array([r * math.cos(a), r * math.sin(a)]))
        return float(obj.value(s[0], s[1]))

    r, a = best
    f_best = fval(r, a)
    dr = imax / (grid_n - 1)
    da = angles[1] - angles[0]
    moves = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    evaluations = 0
    for _ in range(levels):
        for _sweep in range(200):
            improved = False
            for mr, ma in moves:
                r_try = min(max(r + mr * dr, 0.0), imax)
                a_try = a + ma * da
                f_try = fval(r_try, a_try)
                evaluations += 1
                if f_try < f_best:
                    r, a, f_best = r_try, a_try, f_try
                    improved = True
            if not improved:
                break
        dr *= 0.5
        da *= 0.5

    w = math.sqrt(obj.gamma)

    def resid(x):
        s = pair_outputs(params, pair, np.array([x[0] * math.cos(x[1]), x[0] * math.sin(x[1])]))
        return np.array([s[0] - obj.target1, w * (s[1] - obj.target2)])

    # scale-free tolerances: the residuals can be O(1e5) or O(1e-3)
    fit = least_squares(
        resid, [r, a], bounds=([0.0, -np.inf], [imax, np.inf]), x_scale=[imax, 1.0],
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000,
    )
    evaluations += int(fit.nfev)
    if fval(*fit.x) < f_best:
        r, a = float(fit.x[0]), float(fit.x[1])

    i_bar = np.array([r * math.cos(a), r * math.sin(a)])
    return _report_from_current(params, pair, obj, i_bar, Method.GRID, iterations=evaluations)


def solve(params, pair, obj, method="sdp", **kwargs) -> SolveReport:
    method = Method(method) if not isinstance(method, Method) else method
    if method is Method.SDP:
        return solve_sdp(params, pair, obj, **kwargs)
    if method is Method.FRANK_WOLFE:
        return solve_frank_wolfe(params, pair, obj, **kwargs)
    return brute_force(params, pair, obj, **kwargs)
