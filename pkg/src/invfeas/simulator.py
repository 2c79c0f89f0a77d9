"""Fixed-step simulation of the RL-coupled inverter under three controllers.

Controllers:

* ``Oc`` -- linear feedback dV/dt = -k_v (V - V*), with V* the steady-state
  voltage of the optimiser's current.  Needs full model knowledge.
* ``DroopPQ`` -- low-pass filtered P/Q, frequency droop on P and a voltage
  magnitude channel driven by the filter error.
* ``DroopPV2`` -- same P channel, first-order tracking of |V|^2.

The droop controllers output a magnitude and an angle; the dq voltage is
``mag * (cos delta, sin delta)`` in the grid frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import optimizer
from .model import PAIRS, InverterParams, J, instantaneous_outputs, rl_rate, steady_state_voltage, system_matrix


class NonFinite(ArithmeticError):
    """The state left the finite range (controller blow-up)."""


class Controller(enum.Enum):
    OC = "oc"
    DROOP_PQ = "droop-pq"
    DROOP_PV2 = "droop-pv2"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    t0: float = 0.1

    def __post_init__(self):
        if not 0 < self.dt <= 1e-3:
            raise ValueError("dt must lie in (0, 1e-3]")
        if not 0 <= self.t0 < self.t_end:
            raise ValueError("need 0 <= t0 < t_end")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class DroopParams:
    m_p: float = 2.6e-3
    m_q: float = 5.0e-3
    m_v2: float = 5.0
    omega_c: float = 2 * math.pi * 60

    def __post_init__(self):
        for name in ("m_p", "m_q", "m_v2", "omega_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OcParams:
    k_v: float = 10.0

    def __post_init__(self):
        if not self.k_v > 0:
            raise ValueError("k_v must be positive")


_CONTROLLER_PAIR = {Controller.DROOP_PQ: "pq", Controller.DROOP_PV2: "pv2"}


@dataclass(frozen=True)
class Scenario:
    name: str
    controller: Controller
    pair: str
    pre_setpoint: tuple
    post_setpoint: tuple
    optimize_setpoints: bool = False
    gamma: float = 1.0

    def __post_init__(self):
        if self.pair not in PAIRS:
            raise ValueError(f"unknown pair {self.pair!r}")
        need = _CONTROLLER_PAIR.get(self.controller)
        if need is not None and self.pair != need:
            raise ValueError(f"{self.controller.value} tracks {need}, scenario pair is {self.pair}")


@dataclass
class Trajectory:
    t: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    v_d: np.ndarray
    v_q: np.ndarray
    p: np.ndarray
    q: np.ndarray
    vsq: np.ndarray
    internals: dict = field(default_factory=dict)
    setpoints: tuple = ()
    currents: tuple = ()  # OC current targets (pre, post)
    nonfinite: bool = False

    @property
    def i_mag(self) -> np.ndarray:
        return np.hypot(self.i_d, self.i_q)

    def __len__(self):
        return len(self.t)

    def columns(self) -> dict:
        cols = {
            "t": self.t,
            "i_d": self.i_d,
            "i_q": self.i_q,
            "i_mag": self.i_mag,
            "v_d": self.v_d,
            "v_q": self.v_q,
            "P": self.p,
            "Q": self.q,
            "Vsq": self.vsq,
        }
        cols.update(self.internals)
        return cols


def rk4_step(derivative: Callable, state: np.ndarray, t: float, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    # overflow is reported through NonFinite, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = derivative(t, state)
        k2 = derivative(t + 0.5 * dt, state + 0.5 * dt * k1)
        k3 = derivative(t + 0.5 * dt, state + 0.5 * dt * k2)
        k4 = derivative(t + dt, state + dt * k3)
        out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"state left the finite range at t={t + dt:.6g}")
    return out


# state layouts:
#   OC        [i_d, i_q, v_d, v_q]
#   DroopPQ   [i_d, i_q, p_filt, q_filt, delta, v_mag]
#   DroopPV2  [i_d, i_q, p_filt, q_filt, delta, v_sq]


def oc_derivatives(params: InverterParams, ocp: OcParams, v_target, s) -> np.ndarray:
    i, v = s[:2], s[2:4]
    di = rl_rate(params, i, v)
    dv = -ocp.k_v * (v - np.asarray(tuple(v_target), dtype=float))
    return np.concatenate([di, dv])


def oc_closed_loop_matrix(params: InverterParams, ocp: OcParams) -> np.ndarray:
    """State matrix of the linear OC loop on [I; V]; block upper-triangular."""
    a = np.zeros((4, 4))
    a[:2, :2] = system_matrix(params)
    a[:2, 2:] = np.eye(2) / params.l
    a[2:, 2:] = -ocp.k_v * np.eye(2)
    return a


def _droop_common(params, dp, p_star, s, v_dq):
    i = s[:2]
    p, q, _ = instantaneous_outputs(i, v_dq)
    di = rl_rate(params, i, v_dq)
    dp_f = dp.omega_c * (p - s[2])
    dq_f = dp.omega_c * (q - s[3])
    ddelta = -dp.m_p * (s[2] - p_star)
    return di, dp_f, dq_f, ddelta, q


def droop_pq_derivatives(params: InverterParams, dp: DroopParams, setpoint, s) -> np.ndarray:
    p_star = setpoint[0]
    delta, v_mag = s[4], s[5]
    v_dq = v_mag * np.array([math.cos(delta), math.sin(delta)])
    di, dp_f, dq_f, ddelta, q = _droop_common(params, dp, p_star, s, v_dq)
    dv = dp.m_q * dp.omega_c * (s[3] - q)
    return np.array([di[0], di[1], dp_f, dq_f, ddelta, dv])


def droop_pv2_derivatives(params: InverterParams, dp: DroopParams, setpoint, s) -> np.ndarray:
    p_star, vsq_star = setpoint
    delta, v_sq = s[4], s[5]
    v_dq = math.sqrt(max(v_sq, 0.0)) * np.array([math.cos(delta), math.sin(delta)])
    di, dp_f, dq_f, ddelta, _ = _droop_common(params, dp, p_star, s, v_dq)
    dv = -dp.m_v2 * (v_sq - vsq_star)
    return np.array([di[0], di[1], dp_f, dq_f, ddelta, dv])


def _voltage(controller: Controller, s) -> np.ndarray:
    if controller is Controller.OC:
        return s[2:4]
    mag = s[5] if controller is Controller.DROOP_PQ else math.sqrt(max(s[5], 0.0))
    return mag * np.array([math.cos(s[4]), math.sin(s[4])])


def resolve_setpoints(params: InverterParams, scenario: Scenario):
    """Setpoints actually commanded, and the current targets for OC.

    OC always goes through the optimiser because it tracks a current; droop
    controllers only do when ``optimize_setpoints`` is set.
    """
    pair = PAIRS[scenario.pair]
    setpoints = [tuple(map(float, scenario.pre_setpoint)), tuple(map(float, scenario.post_setpoint))]
    currents = []
    if scenario.optimize_setpoints or scenario.controller is Controller.OC:
        for k, sp in enumerate(setpoints):
            rep = optimizer.solve_sdp(params, pair, optimizer.TrackingObjective(sp[0], sp[1], scenario.gamma))
            currents.append(rep.i_star)
            if scenario.optimize_setpoints:
                setpoints[k] = (rep.s1, rep.s2)
    return setpoints, currents


def run_scenario(
    params: InverterParams,
    scenario: Scenario,
    cfg: SimConfig = SimConfig(),
    droop: DroopParams = DroopParams(),
    oc: OcParams = OcParams(),
) -> Trajectory:
    setpoints, currents = resolve_setpoints(params, scenario)
    ctrl = scenario.controller

    if ctrl is Controller.OC:
        targets = [steady_state_voltage(params, c).to_array() for c in currents]
        rates = [lambda t, s, vt=vt: oc_derivatives(params, oc, vt, s) for vt in targets]
        state = np.array([0.0, 0.0, params.e_mag, 0.0])
    else:
        fn = droop_pq_derivatives if ctrl is Controller.DROOP_PQ else droop_pv2_derivatives
        rates = [lambda t, s, sp=sp: fn(params, droop, sp, s) for sp in setpoints]
        v0 = params.e_mag if ctrl is Controller.DROOP_PQ else params.e_mag**2
        state = np.array([0.0, 0.0, 0.0, 0.0, 0.0, v0])
        p0, q0, _ = instantaneous_outputs(state[:2], _voltage(ctrl, state))
        state[2], state[3] = p0, q0

    n = cfg.n_steps
    states = np.full((n + 1, len(state)), np.nan)
    states[0] = state
    times = np.arange(n + 1) * cfg.dt
    nonfinite = False
    last = 0
    for k in range(n):
        t = times[k]
        rate = rates[1] if t >= cfg.t0 - 1e-12 else rates[0]
        try:
            state = rk4_step(rate, state, t, cfg.dt)
        except NonFinite:
            nonfinite = True
            break
        if ctrl is Controller.DROOP_PV2 and state[5] < 0.0:
            state[5] = 0.0
            nonfinite = True
        states[k + 1] = state
        last = k + 1

    states = states[: last + 1]
    times = times[: last + 1]
    return _trajectory(ctrl, times, states, setpoints, currents, nonfinite)


def _trajectory(ctrl, times, states, setpoints, currents, nonfinite) -> Trajectory:
    i = states[:, :2]
    if ctrl is Controller.OC:
        v = states[:, 2:4]
        internals = {}
    else:
        mag = states[:, 5] if ctrl is Controller.DROOP_PQ else np.sqrt(np.maximum(states[:, 5], 0.0))
        v = mag[:, None] * np.column_stack([np.cos(states[:, 4]), np.sin(states[:, 4])])
        internals = {"p_filt": states[:, 2], "q_filt": states[:, 3], "delta": states[:, 4]}
        internals["v_mag" if ctrl is Controller.DROOP_PQ else "v_sq"] = states[:, 5]
    with np.errstate(over="ignore", invalid="ignore"):
        p = 1.5 * np.sum(i * v, axis=1)
        q = 1.5 * np.einsum("ni,ij,nj->n", i, J, v)
        vsq = np.sum(v * v, axis=1)
    return Trajectory(
        t=times,
        i_d=i[:, 0].copy(),
        i_q=i[:, 1].copy(),
        v_d=v[:, 0].copy(),
        v_q=v[:, 1].copy(),
        p=p,
        q=q,
        vsq=vsq,
        internals=internals,
        setpoints=tuple(setpoints),
        currents=tuple(currents),
        nonfinite=nonfinite,
    )


@dataclass(frozen=True)
class SteadyStateMetrics:
    mean: dict
    max: dict


def steady_state_metrics(traj: Trajectory, window: float) -> SteadyStateMetrics:
    """Means and maxima of |I|, P, Q, |V|^2 over [t_end - window, t_end]."""
    t_end = traj.t[-1]
    mask = traj.t >= t_end - window - 1e-12
    series = {"i_mag": traj.i_mag, "P": traj.p, "Q": traj.q, "Vsq": traj.vsq}
    return SteadyStateMetrics(
        mean={k: float(np.mean(v[mask])) for k, v in series.items()},
        max={k: float(np.max(v[mask])) for k, v in series.items()},
    )


def default_scenarios(optimize: bool = False) -> dict[str, Scenario]:
    """Built-in setpoint schedules, keyed by scenario name."""
    pq = ((800.0, 0.0), (1100.0, 0.0))
    pv2 = ((200.0, 120.0**2), (850.0, 120.0**2))
    qv2 = ((0.0, 120.0**2), (-500.0, 120.0**2))
    specs = [
        ("droop-pq", Controller.DROOP_PQ, "pq", pq),
        ("droop-pv2", Controller.DROOP_PV2, "pv2", pv2),
        ("oc-pq", Controller.OC, "pq", pq),
        ("oc-pv2", Controller.OC, "pv2", pv2),
        ("oc-qv2", Controller.OC, "qv2", qv2),
    ]
    return {
        name: Scenario(name, ctrl, pair, pre, post, optimize_setpoints=optimize)
        for name, ctrl, pair, (pre, post) in specs
    }


def oc_forcing(params: InverterParams, ocp: OcParams, v_target) -> np.ndarray:
    """Constant term b of the OC loop written as x' = A_cl x + b."""
    b = np.zeros(4)
    b[:2] = -params.e_vec / params.l
    b[2:] = ocp.k_v * np.asarray(tuple(v_target), dtype=float)
    return b
