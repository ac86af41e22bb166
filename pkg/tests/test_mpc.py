import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_profile, random_system, scalar_plant, scalar_profile
from vcgmpc.bounds import closed_loop_cost_matrix, optimal_cost_matrix
from vcgmpc.exceptions import InstabilityError, InvalidParameterError
from vcgmpc.lq_solver import brute_force_open_loop, dare_fixed_point
from vcgmpc.mpc import (
    LQRController,
    RecedingHorizonController,
    open_loop_costs,
    openloop_step,
    run_lqr,
    run_mpc,
)
from vcgmpc.power_model import DiscretePlant


def test_openloop_step_at_origin(plant, truth):
    np.testing.assert_array_equal(openloop_step(plant, np.zeros(8), truth, 20), [0.0, 0.0])


def test_single_stage_input_is_zero():
    # with T = 1 only x0'Qx0 + u'Ru is optimized, so u = 0
    assert openloop_step(scalar_plant(1.3), [2.0], scalar_profile(1.0, 1.0), 1)[0] == 0.0


def test_openloop_step_matches_dense_oracle(plant, truth, x0):
    u = openloop_step(plant, x0, truth, 20)
    u_ref, _ = brute_force_open_loop(plant, truth, x0, 20)
    np.testing.assert_allclose(u, u_ref[0], rtol=1e-8, atol=1e-8 * np.abs(u_ref[0]).max())


def test_zero_initial_state_stays_zero(plant, truth):
    traj = run_mpc(plant, np.zeros(8), truth, 10, 30)
    assert not traj.x.any() and not traj.u.any() and traj.total_cost == 0.0


def test_trajectory_shapes_and_dynamics(plant, truth, x0):
    traj = run_mpc(plant, x0, truth, 10, 40)
    assert traj.x.shape == (41, 8) and traj.u.shape == (40, 2)
    assert traj.stage_costs.shape == (40, 2)
    np.testing.assert_allclose(traj.x[1:], traj.x[:-1] @ plant.A.T + traj.u @ plant.B.T, atol=1e-15)
    np.testing.assert_array_equal(traj.x[0], x0)


def test_mpc_converges_to_lqr_for_long_horizons(plant, truth, x0):
    lqr = run_lqr(plant, x0, truth, 600)
    long = run_mpc(plant, x0, truth, 2000, 600)
    assert long.total_cost == pytest.approx(lqr.total_cost, rel=0.01)
    np.testing.assert_allclose(
        RecedingHorizonController(2000).fit(plant, truth).gain_,
        LQRController().fit(plant, truth).gain_,
        rtol=1e-3,
    )


def test_short_horizon_is_never_better_than_optimal(plant, truth, x0):
    J_opt = float(x0 @ optimal_cost_matrix(plant, truth) @ x0)
    for T in (2, 5, 10, 20, 50):
        gain = RecedingHorizonController(T).fit(plant, truth).gain_
        J_mpc = float(x0 @ closed_loop_cost_matrix(plant, gain, truth.weights) @ x0)
        assert J_mpc >= J_opt * (1 - 1e-9)


def test_lqr_cost_matches_value_function(plant, truth, x0):
    P = dare_fixed_point(plant, truth).P
    traj = run_lqr(plant, x0, truth, 6000)
    assert traj.total_cost == pytest.approx(float(x0 @ P @ x0), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12))
def test_shrinking_horizon_reproduces_open_loop_plan(seed, steps):
    rng = np.random.default_rng(seed)
    plant = random_system(rng, 3, 2)
    w = random_profile(rng, plant)
    x0 = rng.normal(size=3)
    traj = run_mpc(plant, x0, w, steps + 3, steps, shrinking=True, blowup_factor=np.inf)
    u_ref, cost_ref = brute_force_open_loop(plant, w, x0, steps)
    scale = max(1.0, np.abs(u_ref).max())
    np.testing.assert_allclose(traj.u, u_ref, rtol=0, atol=1e-7 * scale)
    assert traj.total_cost == pytest.approx(cost_ref, rel=1e-7)


def test_fixed_horizon_is_not_time_consistent(plant, truth, x0):
    # a fixed window keeps replanning beyond the original plan's end
    traj = run_mpc(plant, x0, truth, 10, 10)
    u_ref, _ = brute_force_open_loop(plant, truth, x0, 10)
    assert np.abs(traj.u[1:] - u_ref[1:]).max() > 1e-6
    np.testing.assert_allclose(traj.u[0], u_ref[0], atol=1e-10)


def test_blowup_guard():
    plant = DiscretePlant([[3.0]], [[1e-3]])
    with pytest.raises(InstabilityError):
        run_mpc(plant, [1.0], scalar_profile(1.0, 1e6), 1, 50)


def test_shrinking_requires_finite_horizon(plant, truth, x0):
    with pytest.raises(InvalidParameterError):
        run_mpc(plant, x0, truth, None, 5, shrinking=True)


def test_reported_and_true_streams_are_separate(plant, truth, case2, x0):
    traj = run_mpc(plant, x0, case2, 10, 50, true_stream=truth)
    xi = traj.x[:50, :4]
    expected = np.einsum("ij,jk,ik->i", xi, truth[0].Q, xi) + 0.1 * traj.u[:, 0] ** 2
    np.testing.assert_allclose(traj.stage_costs[:, 0], expected, rtol=1e-12)
    assert traj.reported[0] is case2 and traj.true[0] is truth


def test_weight_changes_refit_the_controller(plant, truth, case2, x0):
    stream = [truth] * 5 + [case2] * 5
    traj = run_mpc(plant, x0, stream, 10, 10)
    expected_u5 = openloop_step(plant, traj.x[5], case2, 10)
    np.testing.assert_allclose(traj.u[5], expected_u5, rtol=1e-12)


def test_open_loop_costs(plant, truth, x0):
    traj = run_mpc(plant, x0, truth, 10, 5)
    P = RecedingHorizonController(10).fit(plant, truth).cost_matrix_
    np.testing.assert_allclose(open_loop_costs(plant, traj, 10), np.einsum("ij,jk,ik->i", traj.x[:5], P, traj.x[:5]))


def test_lqr_decays(plant, truth, x0):
    traj = run_lqr(plant, x0, truth, 600)
    assert np.linalg.norm(traj.final_state) < 0.2 * np.linalg.norm(x0)
