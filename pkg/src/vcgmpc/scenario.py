"""Scenario configuration: an INI file with a flat, documented key schema.

Sections (area, tie and agent indices are 1-based)::

    [network]        dt (s, default 0.1), discretization (zoh | euler), name
    [areas.N]        M, D, T_CH, R_f, T_G
    [ties.N]         area_a, area_b, stiffness
    [types.N]        Q, R          true weights of agent N
    [types.N.from.K] Q, R          true weights of agent N from step K on
    [mpc]            horizon (int | infinite, default 50), steps (600),
                     tax_mode (on | off), seed (0)
    [envelope]       q_lower, q_upper, r_lower, r_upper (scales of the
                     step-0 true weights, default 0.5 / 2.0), delta (0.0)
    [disturbance]    x0 (full vector), or area, state, magnitude

Weights are written either as a diagonal (``10, 1, 500, 10``) or as a full
matrix with rows separated by ``;``.
"""

import configparser
import dataclasses
import io
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .bounds import AdmissibilityEnvelope
from .exceptions import ConfigError, InvalidParameterError
from .power_model import (
    STATE_NAMES,
    STATES_PER_AREA,
    AreaParams,
    NetworkModel,
    TieLine,
    assemble_network,
    discretize,
    state_index,
)
from .profiles import TypeProfile, TypeVector

AREA_KEYS = ("M", "D", "T_CH", "R_f", "T_G")
INFINITE = "infinite"
BUNDLED = ("two_area_table1",)

_SCHEDULE = re.compile(r"^types\.(\d+)\.from\.(\d+)$")


@dataclass
class Scenario:
    network: NetworkModel
    x0: np.ndarray
    true_types: TypeProfile
    schedule: dict = field(default_factory=dict)
    dt: float = 0.1
    discretization: str = "zoh"
    sim_steps: int = 600
    horizon: object = 50
    tax_mode: bool = True
    seed: int = 0
    envelope_scales: tuple = (0.5, 2.0, 0.5, 2.0)
    delta: float = 0.0
    name: str = "scenario"

    def __post_init__(self):
        n = STATES_PER_AREA * self.network.n_areas
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.shape[0] != n:
            raise ConfigError(f"disturbance.x0: expected {n} entries, got {self.x0.shape[0]}")
        if len(self.true_types) != self.network.n_areas:
            raise ConfigError(
                f"types: expected one entry per area ({self.network.n_areas}), got {len(self.true_types)}"
            )

    @property
    def n_agents(self):
        return self.network.n_areas

    def plant(self):
        return discretize(assemble_network(self.network), self.dt, self.discretization)

    def profile_at(self, step):
        """True profile in force at ``step`` after applying the schedule."""
        profile = self.true_types
        for start in sorted(self.schedule):
            if start <= step:
                for theta in self.schedule[start]:
                    profile = profile.replace(theta)
        return profile

    def true_stream(self, steps=None):
        """One profile per step; a single profile when nothing is scheduled."""
        steps = self.sim_steps if steps is None else steps
        if not self.schedule:
            return self.true_types
        starts = sorted(k for k in self.schedule if k < steps)
        profiles = {k: self.profile_at(k) for k in starts}
        out, current = [], self.true_types
        for k in range(steps):
            current = profiles.get(k, current)
            out.append(current)
        return out

    def envelope(self):
        q_lo, q_hi, r_lo, r_hi = self.envelope_scales
        return AdmissibilityEnvelope.around(self.true_types, q_lo, q_hi, self.delta, r_lo, r_hi)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _fmt(value):
    return repr(float(value))


def _fmt_matrix(M):
    M = np.asarray(M)
    if np.array_equal(M, np.diag(np.diag(M))):
        return ", ".join(_fmt(v) for v in np.diag(M))
    return "; ".join(", ".join(_fmt(v) for v in row) for row in M)


def _parse_matrix(text, key):
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as numbers") from exc
    if len(rows) == 1:
        return np.diag(rows[0])
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"{key}: matrix must be square")
    return np.array(rows)


def _get(section, key, path, conv, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    raw = section[key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}.{key}: invalid value {raw!r}") from exc


def _indexed(cp, prefix):
    pattern = re.compile(rf"^{prefix}\.(\d+)$")
    found = {}
    for name in cp.sections():
        m = pattern.match(name)
        if m:
            found[int(m.group(1))] = cp[name]
    if found and sorted(found) != list(range(1, len(found) + 1)):
        raise ConfigError(f"{prefix}: sections must be numbered 1..{len(found)}")
    return [found[k] for k in sorted(found)]


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(text)


def _parse_horizon(text):
    t = text.strip().lower()
    if t in (INFINITE, "inf", "none"):
        return None
    value = int(t)
    if value < 1:
        raise ValueError(text)
    return value


def _type_vector(section, agent, path):
    try:
        return TypeVector(
            agent,
            _parse_matrix(_get(section, "Q", path, str, required=True), f"{path}.Q"),
            _parse_matrix(_get(section, "R", path, str, required=True), f"{path}.R"),
        )
    except InvalidParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_scenario(text):
    """Parse configuration text into a validated :class:`Scenario`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc

    net_sec = cp["network"] if cp.has_section("network") else {}
    dt = _get(net_sec, "dt", "network", float, 0.1)
    if not dt > 0:
        raise ConfigError(f"network.dt: must be positive, got {dt}")
    disc = _get(net_sec, "discretization", "network", str, "zoh").strip().lower()
    if disc not in ("zoh", "euler"):
        raise ConfigError(f"network.discretization: unknown method {disc!r}")
    name = _get(net_sec, "name", "network", str, "scenario")

    areas = []
    for idx, sec in enumerate(_indexed(cp, "areas"), start=1):
        path = f"areas.{idx}"
        values = [_get(sec, k, path, float, required=True) for k in AREA_KEYS]
        try:
            areas.append(AreaParams(*values))
        except InvalidParameterError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not areas:
        raise ConfigError("areas: at least one [areas.1] section is required")

    ties = []
    for idx, sec in enumerate(_indexed(cp, "ties"), start=1):
        path = f"ties.{idx}"
        a = _get(sec, "area_a", path, int, required=True)
        b = _get(sec, "area_b", path, int, required=True)
        stiff = _get(sec, "stiffness", path, float, required=True)
        for key, v in (("area_a", a), ("area_b", b)):
            if not 1 <= v <= len(areas):
                raise ConfigError(f"{path}.{key}: area {v} does not exist")
        try:
            ties.append(TieLine(a - 1, b - 1, stiff))
        except InvalidParameterError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    network = NetworkModel(tuple(areas), tuple(ties))

    type_secs = _indexed(cp, "types")
    if len(type_secs) != len(areas):
        raise ConfigError(f"types: expected {len(areas)} sections, got {len(type_secs)}")
    profile = TypeProfile([_type_vector(sec, i, f"types.{i + 1}") for i, sec in enumerate(type_secs)])
    try:
        profile.check_partition(assemble_network(network).partition)
    except InvalidParameterError as exc:
        raise ConfigError(f"types: {exc}") from exc

    schedule = {}
    for sec_name in cp.sections():
        m = _SCHEDULE.match(sec_name)
        if not m:
            continue
        agent, start = int(m.group(1)) - 1, int(m.group(2))
        if not 0 <= agent < len(areas):
            raise ConfigError(f"{sec_name}: agent {agent + 1} does not exist")
        theta = _type_vector(cp[sec_name], agent, sec_name)
        if theta.Q.shape != profile[agent].Q.shape or theta.R.shape != profile[agent].R.shape:
            raise ConfigError(f"{sec_name}: weight dimensions differ from types.{agent + 1}")
        schedule.setdefault(start, []).append(theta)

    mpc = cp["mpc"] if cp.has_section("mpc") else {}
    horizon = _get(mpc, "horizon", "mpc", _parse_horizon, 50)
    steps = _get(mpc, "steps", "mpc", int, 600)
    if steps < 1:
        raise ConfigError(f"mpc.steps: must be >= 1, got {steps}")
    tax_mode = _get(mpc, "tax_mode", "mpc", _parse_bool, True)
    seed = _get(mpc, "seed", "mpc", int, 0)

    env = cp["envelope"] if cp.has_section("envelope") else {}
    scales = tuple(
        _get(env, k, "envelope", float, d)
        for k, d in (("q_lower", 0.5), ("q_upper", 2.0), ("r_lower", 0.5), ("r_upper", 2.0))
    )
    if not (0 < scales[0] <= 1 <= scales[1] and 0 < scales[2] <= 1 <= scales[3]):
        raise ConfigError("envelope: scales must satisfy 0 < lower <= 1 <= upper")
    delta = _get(env, "delta", "envelope", float, 0.0)
    if not 0 <= delta < 1:
        raise ConfigError(f"envelope.delta: must lie in [0, 1), got {delta}")

    n = STATES_PER_AREA * len(areas)
    dist = cp["disturbance"] if cp.has_section("disturbance") else {}
    if "x0" in dist:
        x0 = _get(dist, "x0", "disturbance", lambda s: np.array([float(v) for v in s.split(",")]))
        if x0.shape[0] != n:
            raise ConfigError(f"disturbance.x0: expected {n} entries, got {x0.shape[0]}")
    else:
        area = _get(dist, "area", "disturbance", int, 1)
        state = _get(dist, "state", "disturbance", str, "omega").strip()
        magnitude = _get(dist, "magnitude", "disturbance", float, -0.1)
        if not 1 <= area <= len(areas):
            raise ConfigError(f"disturbance.area: area {area} does not exist")
        if state not in STATE_NAMES:
            raise ConfigError(f"disturbance.state: must be one of {STATE_NAMES}")
        x0 = np.zeros(n)
        x0[state_index(area - 1, state)] = magnitude

    return Scenario(
        network=network,
        x0=x0,
        true_types=profile,
        schedule={k: tuple(v) for k, v in sorted(schedule.items())},
        dt=dt,
        discretization=disc,
        sim_steps=steps,
        horizon=horizon,
        tax_mode=tax_mode,
        seed=seed,
        envelope_scales=scales,
        delta=delta,
        name=name,
    )


def serialize_scenario(sc):
    """Render a :class:`Scenario` back to configuration text."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["network"] = {"name": sc.name, "dt": _fmt(sc.dt), "discretization": sc.discretization}
    for i, area in enumerate(sc.network.areas, start=1):
        cp[f"areas.{i}"] = {k: _fmt(getattr(area, k)) for k in AREA_KEYS}
    for i, tie in enumerate(sc.network.tie_lines, start=1):
        cp[f"ties.{i}"] = {
            "area_a": str(tie.area_a + 1),
            "area_b": str(tie.area_b + 1),
            "stiffness": _fmt(tie.stiffness),
        }
    for theta in sc.true_types:
        cp[f"types.{theta.agent + 1}"] = {"Q": _fmt_matrix(theta.Q), "R": _fmt_matrix(theta.R)}
    for start, thetas in sorted(sc.schedule.items()):
        for theta in thetas:
            cp[f"types.{theta.agent + 1}.from.{start}"] = {
                "Q": _fmt_matrix(theta.Q),
                "R": _fmt_matrix(theta.R),
            }
    cp["mpc"] = {
        "horizon": INFINITE if sc.horizon is None else str(int(sc.horizon)),
        "steps": str(sc.sim_steps),
        "tax_mode": "on" if sc.tax_mode else "off",
        "seed": str(sc.seed),
    }
    q_lo, q_hi, r_lo, r_hi = sc.envelope_scales
    cp["envelope"] = {
        "q_lower": _fmt(q_lo),
        "q_upper": _fmt(q_hi),
        "r_lower": _fmt(r_lo),
        "r_upper": _fmt(r_hi),
        "delta": _fmt(sc.delta),
    }
    cp["disturbance"] = {"x0": ", ".join(_fmt(v) for v in sc.x0)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_scenario(path_or_name):
    """Load a config file, or a bundled scenario by name (e.g. ``two_area_table1``)."""
    if path_or_name in BUNDLED:
        text = resources.files("vcgmpc.data").joinpath(f"{path_or_name}.ini").read_text()
    else:
        try:
            with open(path_or_name) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path_or_name!r}: {exc}") from exc
    return parse_scenario(text)


def scenarios_equal(a, b):
    """Value equality of two scenarios (arrays compared exactly)."""
    if a.schedule.keys() != b.schedule.keys():
        return False
    return (
        a.network == b.network
        and np.array_equal(a.x0, b.x0)
        and a.true_types == b.true_types
        and all(tuple(a.schedule[k]) == tuple(b.schedule[k]) for k in a.schedule)
        and (a.dt, a.discretization, a.sim_steps, a.horizon, a.tax_mode, a.seed, a.name)
        == (b.dt, b.discretization, b.sim_steps, b.horizon, b.tax_mode, b.seed, b.name)
        and tuple(a.envelope_scales) == tuple(b.envelope_scales)
        and a.delta == b.delta
    )
