import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcgmpc.exceptions import InvalidParameterError
from vcgmpc.power_model import (
    AreaParams,
    ContinuousPlant,
    NetworkModel,
    Partition,
    TieLine,
    assemble_network,
    build_area_block,
    discretize,
    state_index,
    state_labels,
)

CASE_STUDY_AREAS = (AreaParams(3.5, 2.0, 50.0, 0.03, 40.0), AreaParams(4.0, 2.75, 10.0, 0.07, 25.0))

positive = st.floats(min_value=0.05, max_value=50.0, allow_nan=False, allow_infinity=False)
area_params = st.builds(AreaParams, positive, positive, positive, positive, positive)


def taylor_zoh(A_c, B_c, dt, terms=60):
    """Series expansion of the augmented exponential; independent of scipy."""
    n, m = B_c.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A_c
    aug[:n, n:] = B_c
    aug *= dt
    total = np.eye(n + m)
    term = np.eye(n + m)
    for k in range(1, terms):
        term = term @ aug / k
        total = total + term
    return total[:n, :n], total[:n, n:]


def test_area_block_entries():
    a, b = build_area_block(CASE_STUDY_AREAS[0])
    assert a[0] == pytest.approx([-2 / 3.5, 1 / 3.5, 0, 0])
    assert a[1] == pytest.approx([0, -1 / 50, 1 / 50, 0])
    assert a[2] == pytest.approx([-1 / (0.03 * 40), 0, -1 / 40, 0])
    np.testing.assert_array_equal(a[3], [1, 0, 0, 0])
    np.testing.assert_allclose(b.ravel(), [0, 0, 1 / 40, 0])


def test_unit_area_block():
    a, b = build_area_block(AreaParams(1, 1, 1, 1, 1))
    np.testing.assert_array_equal(a[3], [1, 0, 0, 0])
    np.testing.assert_array_equal(b.ravel(), [0, 0, 1, 0])


@pytest.mark.parametrize("field", ["M", "D", "T_CH", "R_f", "T_G"])
@pytest.mark.parametrize("value", [0.0, -1.0, math.nan, math.inf])
def test_area_params_reject_non_positive(field, value):
    kwargs = dict(M=1.0, D=1.0, T_CH=1.0, R_f=1.0, T_G=1.0)
    kwargs[field] = value
    with pytest.raises(InvalidParameterError, match=field):
        AreaParams(**kwargs)


def test_invalid_params_are_value_errors():
    with pytest.raises(ValueError):
        AreaParams(-1, 1, 1, 1, 1)


def test_tie_line_validation():
    with pytest.raises(InvalidParameterError):
        TieLine(0, 0, 1.0)
    with pytest.raises(InvalidParameterError):
        TieLine(0, 1, -0.5)
    with pytest.raises(InvalidParameterError):
        NetworkModel(CASE_STUDY_AREAS, (TieLine(0, 2, 1.0),))


def test_two_area_tie_entries():
    A = assemble_network(NetworkModel(CASE_STUDY_AREAS, (TieLine(0, 1, 1.0),))).A_c
    assert A[0, 0] == pytest.approx(-2 / 3.5)
    assert A[0, 3] == pytest.approx(-1 / 3.5)
    assert A[0, 7] == pytest.approx(1 / 3.5)
    assert A[4, 7] == pytest.approx(-1 / 4)
    assert A[4, 3] == pytest.approx(1 / 4)


def test_single_area_network_equals_block():
    plant = assemble_network(NetworkModel(CASE_STUDY_AREAS[:1]))
    a, b = build_area_block(CASE_STUDY_AREAS[0])
    np.testing.assert_array_equal(plant.A_c, a)
    np.testing.assert_array_equal(plant.B_c, b)


def test_three_area_line_by_hand():
    areas = (CASE_STUDY_AREAS[0], CASE_STUDY_AREAS[1], AreaParams(5.0, 1.5, 20.0, 0.05, 30.0))
    ties = (TieLine(0, 1, 1.0), TieLine(1, 2, 0.5))
    A = assemble_network(NetworkModel(areas, ties)).A_c

    expected = np.zeros((12, 12))
    for i, p in enumerate(areas):
        expected[4 * i : 4 * i + 4, 4 * i : 4 * i + 4] = build_area_block(p)[0]
    # area 1: tie to area 2
    expected[0, 3] -= 1.0 / 3.5
    expected[0, 7] += 1.0 / 3.5
    # area 2: ties to areas 1 and 3
    expected[4, 7] -= 1.0 / 4.0 + 0.5 / 4.0
    expected[4, 3] += 1.0 / 4.0
    expected[4, 11] += 0.5 / 4.0
    # area 3: tie to area 2
    expected[8, 11] -= 0.5 / 5.0
    expected[8, 7] += 0.5 / 5.0
    np.testing.assert_allclose(A, expected, rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(area_params, min_size=2, max_size=4), st.data())
def test_network_structure_invariants(areas, data):
    n = len(areas)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    stiff = data.draw(st.lists(positive, min_size=len(chosen), max_size=len(chosen)))
    ties = tuple(TieLine(i, j, s) for (i, j), s in zip(chosen, stiff))
    A = assemble_network(NetworkModel(tuple(areas), ties)).A_c

    for i in range(n):
        row = A[4 * i + 3]
        assert np.count_nonzero(row) == 1
        assert row[4 * i] == 1.0

    # tie coupling: M_i * A[omega_i, delta_j] is symmetric in (i, j)
    coupling = np.array(
        [[areas[i].M * A[4 * i, 4 * j + 3] for j in range(n)] for i in range(n)]
    )
    off = coupling - np.diag(np.diag(coupling))
    np.testing.assert_allclose(off, off.T, rtol=1e-12, atol=1e-15)
    # each frequency row's angle coefficients sum to zero (only differences matter)
    np.testing.assert_allclose(coupling.sum(axis=1), 0.0, atol=1e-12)


def test_state_labels_and_index():
    labels = state_labels(2)
    assert labels[:4] == ["area1_omega", "area1_pmech", "area1_pv", "area1_delta"]
    assert labels[state_index(1, "delta")] == "area2_delta"


def test_discretize_trivial_systems():
    plant = ContinuousPlant(np.zeros((2, 2)), np.eye(2))
    d = discretize(plant, 0.1)
    np.testing.assert_allclose(d.A, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(d.B, 0.1 * np.eye(2), atol=1e-15)

    lam = np.array([-1.0, -0.5, 2.0])
    d = discretize(ContinuousPlant(np.diag(lam), np.ones((3, 1))), 0.1)
    np.testing.assert_allclose(np.diag(d.A), np.exp(0.1 * lam), rtol=1e-14)
    np.testing.assert_allclose(d.B.ravel(), np.expm1(0.1 * lam) / lam, rtol=1e-12)


def test_discretize_rejects_bad_input():
    plant = ContinuousPlant(np.zeros((1, 1)), np.ones((1, 1)))
    with pytest.raises(InvalidParameterError):
        discretize(plant, 0.0)
    with pytest.raises(InvalidParameterError):
        discretize(plant, 0.1, "tustin")


def test_euler_is_first_order():
    c = assemble_network(NetworkModel(CASE_STUDY_AREAS, (TieLine(0, 1, 1.0),)))
    d = discretize(c, 0.1, "euler")
    np.testing.assert_array_equal(d.A, np.eye(8) + 0.1 * c.A_c)
    np.testing.assert_array_equal(d.B, 0.1 * c.B_c)


def test_zoh_matches_series_oracle():
    c = assemble_network(NetworkModel(CASE_STUDY_AREAS, (TieLine(0, 1, 1.0),)))
    d = discretize(c, 0.1)
    A_ref, B_ref = taylor_zoh(c.A_c, c.B_c, 0.1)
    np.testing.assert_allclose(d.A, A_ref, atol=1e-10)
    np.testing.assert_allclose(d.B, B_ref, atol=1e-10)
    assert d.partition == Partition.uniform(2)


@settings(max_examples=30, deadline=None)
@given(st.lists(area_params, min_size=1, max_size=3), positive, st.floats(0.01, 0.5))
def test_zoh_semigroup_and_spectrum(areas, stiffness, dt):
    ties = tuple(TieLine(i, i + 1, stiffness) for i in range(len(areas) - 1))
    c = assemble_network(NetworkModel(tuple(areas), ties))
    one = discretize(c, dt)
    two = discretize(c, 2 * dt)
    np.testing.assert_allclose(two.A, one.A @ one.A, rtol=0, atol=1e-9 * max(1.0, np.abs(two.A).max()))

    mapped = np.exp(dt * np.linalg.eigvals(c.A_c))
    got = np.linalg.eigvals(one.A)
    scale = max(1.0, np.abs(mapped).max())
    for z in mapped:
        assert np.min(np.abs(got - z)) <= 1e-8 * scale
