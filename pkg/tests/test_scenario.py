from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcgmpc.exceptions import ConfigError
from vcgmpc.power_model import AreaParams, NetworkModel, TieLine
from vcgmpc.profiles import TypeProfile, TypeVector
from vcgmpc.scenario import Scenario, load_scenario, parse_scenario, scenarios_equal, serialize_scenario

MINIMAL = """
[areas.1]
M = 3.5
D = 2
T_CH = 50
R_f = 0.03
T_G = 40

[types.1]
Q = 10, 1, 500, 10
R = 0.1
"""


def load_text():
    return resources.files("vcgmpc.data").joinpath("two_area_table1.ini").read_text()


def test_bundled_case_study(scenario):
    assert scenario.network.areas == (
        AreaParams(3.5, 2.0, 50.0, 0.03, 40.0),
        AreaParams(4.0, 2.75, 10.0, 0.07, 25.0),
    )
    assert scenario.network.tie_lines == (TieLine(0, 1, 1.0),)
    assert scenario.dt == 0.1 and scenario.discretization == "zoh"
    assert scenario.sim_steps == 600 and scenario.horizon == 50 and scenario.tax_mode
    np.testing.assert_array_equal(scenario.x0, [-0.1, 0, 0, 0, 0, 0, 0, 0])
    for theta in scenario.true_types:
        np.testing.assert_array_equal(theta.Q, np.diag([10.0, 1.0, 500.0, 10.0]))
        np.testing.assert_array_equal(theta.R, [[0.1]])


def test_defaults_applied():
    sc = parse_scenario(MINIMAL)
    assert sc.dt == 0.1
    assert sc.sim_steps == 600 and sc.horizon == 50 and sc.tax_mode is True
    assert sc.envelope_scales == (0.5, 2.0, 0.5, 2.0) and sc.delta == 0.0
    np.testing.assert_array_equal(sc.x0, [-0.1, 0, 0, 0])


def test_negative_inertia_names_area():
    text = load_text().replace("M = 4", "M = -4")
    with pytest.raises(ConfigError, match=r"areas\.2.*M"):
        parse_scenario(text)


@pytest.mark.parametrize(
    "old, new, pattern",
    [
        ("dt = 0.1", "dt = -1", r"network\.dt"),
        ("discretization = zoh", "discretization = rk4", r"network\.discretization"),
        ("area_b = 2", "area_b = 3", r"ties\.1\.area_b"),
        ("horizon = 50", "horizon = zero", r"mpc\.horizon"),
        ("tax_mode = on", "tax_mode = maybe", r"mpc\.tax_mode"),
        ("R = 0.1\n\n[types.2]", "R = -0.1\n\n[types.2]", r"types\.1"),
        ("q_upper = 2.0", "q_upper = 0.9", r"envelope"),
        ("delta = 0.0", "delta = 1.5", r"envelope\.delta"),
        ("magnitude = -0.1", "magnitude = big", r"disturbance\.magnitude"),
        ("state = omega", "state = speed", r"disturbance\.state"),
        ("T_G = 25", "", r"areas\.2\.T_G"),
    ],
)
def test_schema_errors_carry_key_path(old, new, pattern):
    text = load_text()
    assert old in text
    with pytest.raises(ConfigError, match=pattern):
        parse_scenario(text.replace(old, new, 1))


def test_malformed_text():
    with pytest.raises(ConfigError):
        parse_scenario("this is not [ a config")
    with pytest.raises(ConfigError):
        load_scenario("/nonexistent/path.ini")


def test_infinite_horizon_and_full_matrices():
    text = load_text().replace("horizon = 50", "horizon = infinite")
    text = text.replace("Q = 10, 1, 500, 10\nR = 0.1\n\n[types.2]", "Q = 10, 1, 0, 0; 1, 2, 0, 0; 0, 0, 500, 0; 0, 0, 0, 10\nR = 0.1\n\n[types.2]")
    sc = parse_scenario(text)
    assert sc.horizon is None
    assert sc.true_types[0].Q[0, 1] == 1.0
    assert scenarios_equal(parse_scenario(serialize_scenario(sc)), sc)


def test_scheduled_types():
    text = load_text() + "\n[types.1.from.100]\nQ = 10, 1, 600, 10\nR = 0.1\n"
    sc = parse_scenario(text)
    assert sc.profile_at(99)[0].Q[2, 2] == 500.0
    assert sc.profile_at(100)[0].Q[2, 2] == 600.0
    stream = sc.true_stream(200)
    assert len(stream) == 200 and stream[150][0].Q[2, 2] == 600.0
    assert stream[0] is stream[99] and stream[100] is stream[199]
    assert scenarios_equal(parse_scenario(serialize_scenario(sc)), sc)


def test_round_trip_bundled(scenario):
    again = parse_scenario(serialize_scenario(scenario))
    assert scenarios_equal(again, scenario)
    assert serialize_scenario(again) == serialize_scenario(scenario)


finite = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(finite, finite, finite, finite, finite), min_size=1, max_size=3),
    finite,
    st.floats(0.001, 1.0),
    st.one_of(st.none(), st.integers(1, 500)),
    st.integers(1, 5000),
    st.booleans(),
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=12, max_size=12),
)
def test_round_trip_property(areas, stiffness, dt, horizon, steps, tax, x):
    n = len(areas)
    net = NetworkModel(
        tuple(AreaParams(*a) for a in areas),
        tuple(TieLine(i, i + 1, stiffness) for i in range(n - 1)),
    )
    types = TypeProfile([TypeVector(i, np.diag([1.0 + i, 2.0, 3.0, 4.0]), [[0.1 * (i + 1)]]) for i in range(n)])
    sc = Scenario(net, x[: 4 * n], types, dt=dt, horizon=horizon, sim_steps=steps, tax_mode=tax)
    assert scenarios_equal(parse_scenario(serialize_scenario(sc)), sc)
