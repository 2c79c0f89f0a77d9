"""Inverter circuit model and the steady-state output maps.

The inverter is a controllable dq-frame voltage source tied to an infinite bus
through an RL filter.  At equilibrium every output of interest (active power,
reactive power, squared voltage magnitude) is an isotropic quadratic in the
current, ``alpha * |I|^2 + a . I + offset``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# rotation by -90 degrees: Q = 3/2 I^T J V
J = np.array([[0.0, 1.0], [-1.0, 0.0]])


class SingularPair(ValueError):
    """The linear terms of a quantity pair are (numerically) parallel."""


@dataclass(frozen=True)
class DqVector:
    d: float
    q: float

    @classmethod
    def from_array(cls, arr) -> "DqVector":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0]), float(arr[1]))

    def to_array(self) -> np.ndarray:
        return np.array([self.d, self.q])

    @property
    def magnitude(self) -> float:
        return math.hypot(self.d, self.q)

    def __iter__(self):
        yield self.d
        yield self.q


@dataclass(frozen=True)
class InverterParams:
    """Circuit constants.  The grid voltage is (e_mag, 0) by convention."""

    r: float = 0.8
    l: float = 1.5e-3
    omega: float = 2 * math.pi * 60
    e_mag: float = 120.0
    i_max: float = 1200.0 / (1.5 * 120.0)

    def __post_init__(self):
        for name in ("r", "l", "omega", "e_mag", "i_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def e_vec(self) -> np.ndarray:
        return np.array([self.e_mag, 0.0])

    @property
    def impedance(self) -> float:
        return math.hypot(self.r, self.omega * self.l)


class OutputQuantity(enum.Enum):
    ACTIVE_POWER = "P"
    REACTIVE_POWER = "Q"
    SQUARED_VOLTAGE = "V2"

    @property
    def index(self) -> int:
        return _INDEX[self]


_INDEX = {
    OutputQuantity.ACTIVE_POWER: 0,
    OutputQuantity.REACTIVE_POWER: 1,
    OutputQuantity.SQUARED_VOLTAGE: 2,
}

P = OutputQuantity.ACTIVE_POWER
Q = OutputQuantity.REACTIVE_POWER
V2 = OutputQuantity.SQUARED_VOLTAGE

PAIRS = {"pq": (P, Q), "pv2": (P, V2), "qv2": (Q, V2)}


def check_pair(pair) -> tuple[OutputQuantity, OutputQuantity]:
    q1, q2 = pair
    if q1 == q2:
        raise ValueError(f"quantity pair must be two distinct quantities, got {q1.value} twice")
    return q1, q2


@dataclass(frozen=True)
class QuadraticOutputMap:
    alpha: float
    a_vec: DqVector
    offset: float

    def __call__(self, i_bar) -> np.ndarray | float:
        """Evaluate at one current (shape (2,)) or a batch (shape (..., 2))."""
        i = np.asarray(i_bar, dtype=float)
        a = self.a_vec.to_array()
        out = self.alpha * np.sum(i * i, axis=-1) + i @ a + self.offset
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LemmaForm:
    """A quantity pair rescaled to the unit disk x = I / i_max.

    ``c_vec`` solves [a_n; b_n] c = (alpha_n, beta_n), so the pair's image is an
    affine copy of {|x|^2 c + x : |x| <= 1}.
    """

    alpha_n: float
    beta_n: float
    a_n: DqVector
    b_n: DqVector
    c_vec: DqVector
    offset1: float
    offset2: float

    @property
    def basis(self) -> np.ndarray:
        return np.array([self.a_n.to_array(), self.b_n.to_array()])

    def image(self, x) -> np.ndarray:
        """Unnormalised output pair for unit-disk coordinates ``x``."""
        x = np.asarray(x, dtype=float)
        sq = np.sum(x * x, axis=-1)
        s1 = self.alpha_n * sq + x @ self.a_n.to_array() + self.offset1
        s2 = self.beta_n * sq + x @ self.b_n.to_array() + self.offset2
        return np.stack([s1, s2], axis=-1)


def system_matrix(params: InverterParams) -> np.ndarray:
    k = params.r / params.l
    w = params.omega
    return np.array([[-k, w], [-w, -k]])


def rl_rate(params: InverterParams, i_dq, v_dq) -> np.ndarray:
    """Right-hand side of the RL filter dynamics dI/dt."""
    a = system_matrix(params)
    return a @ np.asarray(i_dq, dtype=float) + (np.asarray(v_dq, dtype=float) - params.e_vec) / params.l


def steady_state_voltage(params: InverterParams, i_bar) -> DqVector:
    i = np.asarray(tuple(i_bar), dtype=float)
    v = params.e_vec - params.l * system_matrix(params) @ i
    return DqVector.from_array(v)


def instantaneous_outputs(i_dq, v_dq) -> tuple[float, float, float]:
    """(P, Q, |V|^2) for an arbitrary current/voltage pair."""
    i = np.asarray(tuple(i_dq), dtype=float)
    v = np.asarray(tuple(v_dq), dtype=float)
    return 1.5 * float(i @ v), 1.5 * float(i @ J @ v), float(v @ v)


def output_triple(params: InverterParams, i_bar) -> tuple[float, float, float]:
    return instantaneous_outputs(i_bar, steady_state_voltage(params, i_bar))


def quadratic_map(params: InverterParams, q: OutputQuantity) -> QuadraticOutputMap:
    """Coefficients obtained by expanding the outputs at V = E - L A I.

    The quadratic part of I^T (L A) I only sees the symmetric part of A,
    which is -(R/L) I_2; that is what makes every map isotropic.
    """
    a = system_matrix(params)
    e = params.e_vec
    lw = params.omega * params.l
    if q is P:
        return QuadraticOutputMap(1.5 * params.r, DqVector.from_array(1.5 * e), 0.0)
    if q is Q:
        return QuadraticOutputMap(1.5 * lw, DqVector.from_array(1.5 * J @ e), 0.0)
    if q is V2:
        lin = -2.0 * params.l * a.T @ e
        return QuadraticOutputMap(params.r**2 + lw**2, DqVector.from_array(lin), params.e_mag**2)
    raise TypeError(f"unknown quantity {q!r}")


def lemma_form(params: InverterParams, q1: OutputQuantity, q2: OutputQuantity) -> LemmaForm:
    check_pair((q1, q2))
    m1 = quadratic_map(params, q1)
    m2 = quadratic_map(params, q2)
    s = params.i_max
    a_n = s * m1.a_vec.to_array()
    b_n = s * m2.a_vec.to_array()
    basis = np.array([a_n, b_n])
    det = np.linalg.det(basis)
    if abs(det) < 1e-12 * np.linalg.norm(a_n) * np.linalg.norm(b_n):
        raise SingularPair(f"linear terms of {q1.value} and {q2.value} are parallel (det={det:g})")
    alpha_n = m1.alpha * s**2
    beta_n = m2.alpha * s**2
    c = np.linalg.solve(basis, [alpha_n, beta_n])
    return LemmaForm(
        alpha_n=alpha_n,
        beta_n=beta_n,
        a_n=DqVector.from_array(a_n),
        b_n=DqVector.from_array(b_n),
        c_vec=DqVector.from_array(c),
        offset1=m1.offset,
        offset2=m2.offset,
    )


def pair_maps(params: InverterParams, pair) -> tuple[QuadraticOutputMap, QuadraticOutputMap]:
    q1, q2 = check_pair(pair)
    return quadratic_map(params, q1), quadratic_map(params, q2)


def pair_outputs(params: InverterParams, pair, i_bar) -> np.ndarray:
    """Output pair for one current or a batch of currents, via the quadratic maps."""
    m1, m2 = pair_maps(params, pair)
    return np.stack([np.asarray(m1(i_bar)), np.asarray(m2(i_bar))], axis=-1)
