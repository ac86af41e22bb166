"""Receding-horizon (MPC) and infinite-horizon (LQR) state feedback.

The controllers follow the scikit-learn estimator protocol: hyperparameters
go to ``__init__``, ``fit(plant, profile)`` solves for the feedback gain, and
``predict(X)`` maps a batch of states to inputs.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_vector
from .exceptions import InstabilityError, InvalidParameterError
from .lq_solver import DARE_MAX_ITER, DARE_TOL, dare_fixed_point, riccati_finite
from .profiles import (
    TrajectoryRecord,
    TypeProfile,
    TypeVector,
    expand_stream,
    stage_costs,
)

__all__ = [
    "LQRController",
    "RecedingHorizonController",
    "TrajectoryRecord",
    "TypeProfile",
    "TypeVector",
    "open_loop_costs",
    "openloop_step",
    "run_lqr",
    "run_mpc",
]

BLOWUP_FACTOR = 1e6


class _FeedbackMixin:
    def predict(self, X):
        check_is_fitted(self, "gain_")
        X = check_array(X, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return -X @ self.gain_.T

    def cost(self, X):
        """Quadratic value ``x' P x`` of each row of ``X`` under the fitted cost matrix."""
        check_is_fitted(self, "cost_matrix_")
        X = check_array(X, ensure_2d=True)
        return np.einsum("ij,jk,ik->i", X, self.cost_matrix_, X)


class RecedingHorizonController(_FeedbackMixin, BaseEstimator):
    """First-input feedback of the ``horizon``-stage open-loop LQ problem.

    The weights reported at fit time are used over the entire horizon and
    there is no terminal cost, so ``cost(X)`` is the open-loop optimum
    ``J_T(x) = x' P_T x``.
    """

    def __init__(self, horizon=50):
        self.horizon = horizon

    def fit(self, plant, profile):
        if self.horizon is None or int(self.horizon) < 1:
            raise InvalidParameterError(f"horizon must be a positive integer, got {self.horizon}")
        if isinstance(profile, TypeProfile):
            profile.check_partition(plant.partition)
        self.ladder_ = riccati_finite(plant, profile, int(self.horizon))
        self.gain_ = self.ladder_.first_gain
        self.cost_matrix_ = self.ladder_.cost_matrix
        self.n_features_in_ = plant.n_states
        return self


class LQRController(_FeedbackMixin, BaseEstimator):
    """Stationary LQR feedback from the fixed-point DARE solution."""

    def __init__(self, tol=DARE_TOL, max_iter=DARE_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, plant, profile):
        if isinstance(profile, TypeProfile):
            profile.check_partition(plant.partition)
        sol = dare_fixed_point(plant, profile, tol=self.tol, max_iter=self.max_iter)
        self.cost_matrix_ = sol.P
        self.gain_ = sol.K
        self.n_iter_ = sol.iterations
        self.n_features_in_ = plant.n_states
        return self


def make_controller(horizon):
    """``horizon=None`` selects the infinite-horizon LQR."""
    return LQRController() if horizon is None else RecedingHorizonController(horizon)


def openloop_step(plant, x, profile, horizon):
    """Return ``u_t`` for state ``x``: solve the ``horizon``-stage problem, keep the first input."""
    x = check_vector(x, plant.n_states, "x")
    ctrl = RecedingHorizonController(horizon).fit(plant, profile)
    return ctrl.predict(x[None, :])[0]


def simulate_closed_loop(
    plant, x0, weight_stream, horizon, steps, shrinking=False, blowup_factor=BLOWUP_FACTOR
):
    """Raw closed loop; returns ``(x, u)`` arrays.

    ``weight_stream`` holds one :class:`TypeProfile` or :class:`CostWeights`
    per step; controllers are refit only when the object changes.
    """
    if shrinking and horizon is None:
        raise InvalidParameterError("a shrinking horizon needs a finite horizon")
    A, B = plant.A, plant.B
    xs = np.zeros((steps + 1, plant.n_states))
    us = np.zeros((steps, plant.n_inputs))
    xs[0] = x0
    limit = blowup_factor * np.linalg.norm(x0)
    ctrl, current = None, None
    for k in range(steps):
        if weight_stream[k] is not current:
            current = weight_stream[k]
            ctrl = make_controller(horizon).fit(plant, current)
        if shrinking:
            gain = ctrl.ladder_.gains[min(int(horizon), steps - k) - 1]
        else:
            gain = ctrl.gain_
        u = -gain @ xs[k]
        us[k] = u
        xs[k + 1] = A @ xs[k] + B @ u
        if limit > 0 and np.linalg.norm(xs[k + 1]) > limit:
            raise InstabilityError(f"state norm exceeded {limit:.3g} at step {k + 1}")
    return xs, us


def run_mpc(
    plant,
    x0,
    profile_stream,
    horizon,
    steps,
    true_stream=None,
    shrinking=False,
    blowup_factor=BLOWUP_FACTOR,
):
    """Simulate the closed loop ``x[k+1] = A x[k] + B u[k]``.

    ``u[k]`` is the receding-horizon input computed from the profile reported
    at step ``k`` (``horizon=None`` uses the stationary LQR gain instead).
    Stage costs are recorded under ``true_stream``, which defaults to the
    reported stream. With ``shrinking=True`` the horizon at step ``k`` is
    ``min(horizon, steps - k)``, so the window ends at ``steps``.
    """
    x0 = check_vector(x0, plant.n_states, "x0")
    steps = int(steps)
    reported = expand_stream(profile_stream, steps)
    true = reported if true_stream is None else expand_stream(true_stream, steps)
    xs, us = simulate_closed_loop(plant, x0, reported, horizon, steps, shrinking, blowup_factor)
    costs = stage_costs(xs, us, true, plant.partition)
    return TrajectoryRecord(xs, us, costs, reported, true, plant.partition, horizon)


def run_lqr(plant, x0, profile, steps, true_stream=None):
    """Closed loop under the stationary DARE gain of the reported profile."""
    return run_mpc(plant, x0, profile, None, steps, true_stream=true_stream)


def open_loop_costs(plant, traj, horizon):
    """``J_T(x_t; theta_t) = x_t' P_T(theta_t) x_t`` along a trajectory, one per step."""
    out = np.zeros(traj.steps)
    cache = {}
    for k in range(traj.steps):
        profile = traj.reported[k]
        P = cache.get(id(profile))
        if P is None:
            P = riccati_finite(plant, profile, horizon).cost_matrix
            cache = {id(profile): P}
        x = traj.x[k]
        out[k] = x @ P @ x
    return out
