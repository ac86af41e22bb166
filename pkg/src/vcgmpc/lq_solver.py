"""Linear-quadratic solvers: finite-horizon Riccati ladder, fixed-point DARE,
and a dense open-loop oracle used to cross-check both."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_vector, symmetrize
from .exceptions import DivergenceError, InvalidParameterError, NumericalError
from .profiles import CostWeights, TypeProfile, expand_stream, stage_costs

COND_LIMIT = 1e12
DARE_TOL = 1e-10
DARE_MAX_ITER = 10**6


@dataclass(frozen=True)
class RiccatiLadder:
    """Cost matrices ``P[0..T]`` and gains ``gains[0..T-1]``.

    ``P[k]`` is the cost-to-go matrix with ``k`` stages remaining (``P[0] = 0``).
    ``gains[k]`` is the feedback computed from ``P[k]``; the first input of
    the ``T``-stage problem is ``-gains[T-1] @ x``.
    """

    P: np.ndarray
    gains: np.ndarray

    @property
    def horizon(self):
        return self.gains.shape[0]

    @property
    def cost_matrix(self):
        return self.P[-1]

    @property
    def first_gain(self):
        return self.gains[-1]


@dataclass(frozen=True)
class DareSolution:
    P: np.ndarray
    K: np.ndarray
    iterations: int


def _as_weights(w):
    if isinstance(w, TypeProfile):
        return w.weights
    if isinstance(w, CostWeights):
        return w
    return CostWeights(*w)


def _check_dims(plant, w):
    n, m = plant.n_states, plant.n_inputs
    if w.Q.shape != (n, n) or w.R.shape != (m, m):
        raise InvalidParameterError(
            f"weights have shapes {w.Q.shape}, {w.R.shape}; plant is ({n}, {m})"
        )


def riccati_step(A, B, P, Q, R, cond_limit=COND_LIMIT):
    """One backward Riccati step; returns ``(P_next, K)`` with ``K`` from ``P``."""
    BtP = B.T @ P
    S = BtP @ B + R
    if np.linalg.cond(S) > cond_limit:
        raise NumericalError("B'PB + R is too ill-conditioned")
    K = np.linalg.solve(S, BtP @ A)
    AtP = A.T @ P
    P_next = AtP @ A - AtP @ B @ K + Q
    return symmetrize(P_next), K


def riccati_finite(plant, w, T, cond_limit=COND_LIMIT):
    """Run ``T`` steps of the Riccati recursion from ``P_0 = 0``."""
    w = _as_weights(w)
    _check_dims(plant, w)
    T = int(T)
    if T < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {T}")
    n, m = plant.n_states, plant.n_inputs
    P = np.zeros((T + 1, n, n))
    gains = np.zeros((T, m, n))
    for k in range(T):
        P[k + 1], gains[k] = riccati_step(plant.A, plant.B, P[k], w.Q, w.R, cond_limit)
    return RiccatiLadder(P, gains)


def dare_fixed_point(plant, w, tol=DARE_TOL, max_iter=DARE_MAX_ITER):
    """Infinite-horizon LQR cost matrix by iterating the Riccati recursion.

    Stops when ``max|P_{k+1} - P_k| < tol * max(1, max|P_{k+1}|)``.
    Raises :class:`DivergenceError` if that never happens within ``max_iter``.
    """
    w = _as_weights(w)
    _check_dims(plant, w)
    P = np.zeros_like(w.Q)
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            P_next, _ = riccati_step(plant.A, plant.B, P, w.Q, w.R)
        scale = max(1.0, float(np.max(np.abs(P_next))))
        if not np.isfinite(scale):
            raise DivergenceError("Riccati iterates blew up; is (A, B) stabilizable?")
        if np.max(np.abs(P_next - P)) < tol * scale:
            _, K = riccati_step(plant.A, plant.B, P_next, w.Q, w.R)
            return DareSolution(P_next, K, it)
        P = P_next
    raise DivergenceError(f"Riccati iteration did not converge in {max_iter} steps")


def dare_residual(plant, w, P):
    w = _as_weights(w)
    P_next, _ = riccati_step(plant.A, plant.B, P, w.Q, w.R)
    return float(np.max(np.abs(P_next - P)))


def is_stabilizable(A, B, tol=1e-9):
    """PBH test on the eigenvalues of ``A`` outside the open unit disc."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-8) < n:
                return False
    return True


def brute_force_open_loop(plant, w, x0, T, cond_limit=COND_LIMIT):
    """Minimize the ``T``-stage cost as one dense quadratic in ``u_0..u_{T-1}``.

    Independent of the Riccati recursion: states are written as
    ``x_k = A^k x0 + sum_j A^(k-1-j) B u_j`` and the normal equations are
    solved directly. Returns ``(u_seq, cost)`` with ``u_seq`` of shape ``(T, m)``.
    """
    w = _as_weights(w)
    _check_dims(plant, w)
    A, B = plant.A, plant.B
    n, m = plant.n_states, plant.n_inputs
    x0 = check_vector(x0, n, "x0")
    T = int(T)
    if T < 1:
        raise InvalidParameterError(f"horizon must be >= 1, got {T}")

    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(A @ powers[-1])
    Phi = np.vstack(powers[:T])
    Gamma = np.zeros((T * n, T * m))
    for k in range(1, T):
        for j in range(k):
            Gamma[k * n : (k + 1) * n, j * m : (j + 1) * m] = powers[k - 1 - j] @ B
    Qbar = np.kron(np.eye(T), w.Q)
    Rbar = np.kron(np.eye(T), w.R)

    H = Gamma.T @ Qbar @ Gamma + Rbar
    if np.linalg.cond(H) > cond_limit:
        raise NumericalError("dense normal matrix is too ill-conditioned")
    free = Phi @ x0
    f = Gamma.T @ Qbar @ free
    u = -np.linalg.solve(H, f)
    cost = float(free @ Qbar @ free + 2.0 * f @ u + u @ H @ u)
    return u.reshape(T, m), cost


def evaluate_agent_costs(traj, profiles):
    """Per-agent totals ``J^i`` of a trajectory under ``profiles``, and their sum."""
    stream = expand_stream(profiles, traj.steps)
    for profile in {id(p): p for p in stream}.values():
        profile.check_partition(traj.partition)
    per_step = stage_costs(traj.x, traj.u, stream, traj.partition)
    J = per_step.sum(axis=0)
    return J, float(J.sum())
