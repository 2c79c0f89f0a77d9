"""Independent reference computations used by ``verify`` and the test-suite.

Nothing here shares code paths with the closed forms it checks: the support
oracle enumerates currents, the OC oracle uses its own matrix exponential.
"""
from __future__ import annotations

import math

import numpy as np

from .model import InverterParams, output_triple, pair_outputs


def polar_grid(i_max: float, n_r: int, n_a: int) -> np.ndarray:
    """Currents on a polar grid over the closed disk, shape (n_r, n_a, 2)."""
    r = np.linspace(0.0, i_max, n_r)[:, None]
    a = 2.0 * np.pi * np.arange(n_a) / n_a
    return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def grid_support(params: InverterParams, pair, thetas, n_r: int = 2001, n_a: int = 2001) -> np.ndarray:
    """Brute-force max over a polar current grid of theta . (S1, S2), for each angle."""
    r = np.linspace(0.0, params.i_max, n_r)
    a = 2.0 * np.pi * np.arange(n_a) / n_a
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    best = np.full(len(thetas), -np.inf)
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    for j0 in range(0, n_r, 128):
        rr = r[j0 : j0 + 128, None]
        cur = np.stack([rr * np.cos(a), rr * np.sin(a)], axis=-1)
        out = pair_outputs(params, pair, cur).reshape(-1, 2)
        # (n_theta, n_points) is too large at full size; reduce per chunk of directions
        for k0 in range(0, len(thetas), 32):
            vals = dirs[k0 : k0 + 32] @ out.T
            best[k0 : k0 + 32] = np.maximum(best[k0 : k0 + 32], vals.max(axis=1))
    return best


def grid_support_separable(params: InverterParams, pair, thetas, n_r: int = 2001, n_a: int = 2001) -> np.ndarray:
    """Same maximum as :func:`grid_support`, over the same polar grid, in O(n_theta (n_r + n_a)).

    Each output is |I|^2 alpha + a . I + offset, so on the grid
    theta . s(r, phi) = r^2 g + r (d . u_phi) + const and, since r >= 0, the
    max over phi can be taken first for each direction.  The coefficients are
    read off the circuit by finite probes rather than taken from the model's
    maps: alpha from a radius-1 ring average, a from the odd part.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    probe = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    s = np.array([pair_triple(params, pair, i) for i in probe])
    const = s[0]
    alpha = 0.25 * (s[1] + s[2] + s[3] + s[4]) - const
    lin = 0.5 * np.array([s[1] - s[2], s[3] - s[4]])  # (2 coords, 2 outputs)
    r = np.linspace(0.0, params.i_max, n_r)
    a = 2.0 * np.pi * np.arange(n_a) / n_a
    u = np.column_stack([np.cos(a), np.sin(a)])
    d = dirs @ lin.T  # d_k = sum_j theta_j lin[:, j]
    m = np.max(d @ u.T, axis=1)  # best angle per direction
    g = dirs @ alpha
    vals = g[:, None] * r[None, :] ** 2 + m[:, None] * r[None, :]
    return np.max(vals, axis=1) + dirs @ const


def pair_triple(params: InverterParams, pair, i_bar) -> np.ndarray:
    """Output pair computed from the circuit as a complex phasor, V = E + (R + j w L) I."""
    cur = complex(i_bar[0], i_bar[1])
    v = params.e_mag + complex(params.r, params.omega * params.l) * cur
    full = {"P": 1.5 * (v * cur.conjugate()).real, "Q": 1.5 * (v * cur.conjugate()).imag, "V2": abs(v) ** 2}
    return np.array([full[q.value] for q in pair])


def expm_taylor(a: np.ndarray, terms: int = 30) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a truncated Taylor series."""
    a = np.asarray(a, dtype=float)
    norm = np.max(np.sum(np.abs(a), axis=1))
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    b = a / 2.0**s
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms + 1):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def oc_exact(a_cl: np.ndarray, forcing: list, x0: np.ndarray, times: np.ndarray, t0: float) -> np.ndarray:
    """Exact samples of x' = A x + b, with b switching from forcing[0] to forcing[1] at t0.

    Requires A invertible (the OC loop is Hurwitz).
    """
    out = np.empty((len(times), len(x0)))
    eq = [np.linalg.solve(a_cl, -b) for b in forcing]
    x_switch = None
    for k, t in enumerate(times):
        if t < t0 - 1e-12:
            out[k] = eq[0] + expm_taylor(a_cl * t) @ (x0 - eq[0])
        else:
            if x_switch is None:
                x_switch = eq[0] + expm_taylor(a_cl * t0) @ (x0 - eq[0])
            out[k] = eq[1] + expm_taylor(a_cl * (t - t0)) @ (x_switch - eq[1])
    return out


def oc_exact_fast(a_cl: np.ndarray, forcing: list, x0: np.ndarray, dt: float, n: int, k_switch: int) -> np.ndarray:
    """Same as :func:`oc_exact` on a uniform grid, propagating with exp(A dt).

    ``k_switch`` is the first sample index at which the second forcing applies.
    """
    step = expm_taylor(a_cl * dt)
    eq = [np.linalg.solve(a_cl, -b) for b in forcing]
    out = np.empty((n + 1, len(x0)))
    out[0] = x0
    for k in range(n):
        e = eq[1] if k >= k_switch else eq[0]
        out[k + 1] = e + step @ (out[k] - e)
    return out


def brute_triple(params: InverterParams, i_bar) -> np.ndarray:
    return np.array(output_triple(params, i_bar))
