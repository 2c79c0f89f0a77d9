"""TOML configuration: inverter constants, controller gains, simulation settings, scenarios.

Every table and key is optional; missing values fall back to the built-in
defaults, so an empty file is a valid config.  Unknown keys are errors.

Schema (units in brackets)::

    [inverter]
    r = 0.8              # filter resistance [ohm]
    l = 1.5e-3           # filter inductance [H]
    omega = 376.99...    # grid angular frequency [rad/s]
    e_mag = 120.0        # grid voltage magnitude [V]
    i_max = 6.666...     # current magnitude limit [A]

    [droop]
    m_p = 2.6e-3         # frequency droop [rad/(s W)]
    m_q = 5.0e-3         # voltage droop [V/VAr]
    m_v2 = 5.0           # |V|^2 tracking gain [1/s]
    omega_c = 376.99...  # power filter cut-off [rad/s]

    [oc]
    k_v = 10.0           # voltage feedback gain [1/s]

    [sim]
    dt = 1e-4            # step [s]
    t_end = 1.0          # horizon [s]
    t0 = 0.1             # setpoint switch [s]

    [[scenario]]         # repeatable; replaces the built-in list when present
    name = "droop-pv2"
    controller = "droop-pv2"   # oc | droop-pq | droop-pv2
    pair = "pv2"               # pq | pv2 | qv2
    pre = [200.0, 14400.0]     # setpoint before t0 [W, VAr or V^2]
    post = [850.0, 14400.0]    # setpoint from t0 on
    gamma = 1.0                # weight of the second quantity when optimising
    optimize = false

No angle-valued keys exist; angles on the command line are in degrees.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import InverterParams
from .simulator import Controller, DroopParams, OcParams, Scenario, SimConfig, default_scenarios


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    inverter: InverterParams = field(default_factory=InverterParams)
    droop: DroopParams = field(default_factory=DroopParams)
    oc: OcParams = field(default_factory=OcParams)
    sim: SimConfig = field(default_factory=SimConfig)
    scenarios: dict = field(default_factory=default_scenarios)


_SECTIONS = {"inverter": InverterParams, "droop": DroopParams, "oc": OcParams, "sim": SimConfig}
_SCENARIO_KEYS = {"name", "controller", "pair", "pre", "post", "gamma", "optimize"}


def _build(cls, table: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: float(v) for k, v in table.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def _scenario(entry: dict, idx: int) -> Scenario:
    where = f"scenario #{idx + 1}"
    unknown = set(entry) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {', '.join(sorted(unknown))}")
    missing = {"name", "controller", "pair", "pre", "post"} - set(entry)
    if missing:
        raise ConfigError(f"[{where}] missing key(s): {', '.join(sorted(missing))}")
    try:
        return Scenario(
            name=str(entry["name"]),
            controller=Controller(entry["controller"]),
            pair=str(entry["pair"]),
            pre_setpoint=tuple(float(x) for x in entry["pre"]),
            post_setpoint=tuple(float(x) for x in entry["post"]),
            optimize_setpoints=bool(entry.get("optimize", False)),
            gamma=float(entry.get("gamma", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def parse_config(text: str) -> Config:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    unknown = set(doc) - set(_SECTIONS) - {"scenario"}
    if unknown:
        raise ConfigError(f"unknown table(s): {', '.join(sorted(unknown))}")
    cfg = Config()
    for name, cls in _SECTIONS.items():
        if name in doc:
            setattr(cfg, name, _build(cls, doc[name], name))
    if "scenario" in doc:
        scenarios = [_scenario(e, k) for k, e in enumerate(doc["scenario"])]
        names = [s.name for s in scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate scenario names")
        cfg.scenarios = {s.name: s for s in scenarios}
    return cfg


def load_config(path) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    return parse_config(text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(cfg: Config) -> str:
    lines = []
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_fmt(float(getattr(obj, f.name)))}")
        lines.append("")
    for sc in cfg.scenarios.values():
        lines += [
            "[[scenario]]",
            f"name = {_fmt(sc.name)}",
            f"controller = {_fmt(sc.controller.value)}",
            f"pair = {_fmt(sc.pair)}",
            f"pre = {_fmt(tuple(map(float, sc.pre_setpoint)))}",
            f"post = {_fmt(tuple(map(float, sc.post_setpoint)))}",
            f"gamma = {_fmt(float(sc.gamma))}",
            f"optimize = {_fmt(sc.optimize_setpoints)}",
            "",
        ]
    return "\n".join(lines)
