"""Suboptimality certificates for receding-horizon LQ control.

For a horizon ``T`` the certificate combines

* ``alpha_T``: smallest ``a`` with ``a P_{T-1} >= P_T`` (value growth per extra stage),
* ``rho_T``: largest ``r`` with ``r Pbar_T <= Q_lo`` (``Pbar`` built from the upper
  envelope weights),
* ``gamma_T = (1 - rho_T) alpha_T / (1 - delta)``, the per-step decay factor of
  ``J_T`` along the closed loop,
* ``1 + eps_T = rho_T (1 - delta)^(1 - T) / (1 - gamma_T)``, valid when ``gamma_T < 1``,

so that ``J <= J_mpc <= (1 + eps_T) J`` for every state.
"""

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag, solve_discrete_lyapunov

from ._validation import PSD_TOL, as_matrix, check_pd, generalized_eigvalsh, min_eig
from .exceptions import (
    CertificateFalsifiedError,
    DegeneracyError,
    InstabilityError,
    InvalidParameterError,
    NoCertificateError,
)
from .lq_solver import dare_fixed_point, riccati_finite, riccati_step
from .mpc import RecedingHorizonController, run_mpc
from .profiles import CostWeights, TypeProfile, expand_stream

IDENTITY_RTOL = 1e-8


@dataclass(frozen=True)
class AdmissibilityEnvelope:
    """Per-agent bounds ``Q_lo <= Q <= Q_hi``, ``R_lo <= R <= R_hi`` and rate limit ``delta``."""

    Q_lo: tuple
    Q_hi: tuple
    R_lo: tuple
    R_hi: tuple
    delta: float = 0.0

    def __post_init__(self):
        fields = {}
        for name in ("Q_lo", "Q_hi", "R_lo", "R_hi"):
            mats = tuple(check_pd(as_matrix(m), f"{name}[{i}]") for i, m in enumerate(getattr(self, name)))
            fields[name] = mats
            object.__setattr__(self, name, mats)
        if len({len(v) for v in fields.values()}) != 1:
            raise InvalidParameterError("envelope bounds disagree on agent count")
        for lo, hi in (("Q_lo", "Q_hi"), ("R_lo", "R_hi")):
            for i, (a, b) in enumerate(zip(fields[lo], fields[hi])):
                if a.shape != b.shape or min_eig(b - a) < -PSD_TOL:
                    raise InvalidParameterError(f"{lo}[{i}] is not below {hi}[{i}]")
        if not 0.0 <= self.delta < 1.0:
            raise InvalidParameterError(f"delta must lie in [0, 1), got {self.delta}")

    @classmethod
    def around(cls, profile, lower=0.5, upper=2.0, delta=0.0, r_lower=None, r_upper=None):
        """Envelope of scaled copies of ``profile``'s weights."""
        r_lower = lower if r_lower is None else r_lower
        r_upper = upper if r_upper is None else r_upper
        return cls(
            tuple(lower * t.Q for t in profile),
            tuple(upper * t.Q for t in profile),
            tuple(r_lower * t.R for t in profile),
            tuple(r_upper * t.R for t in profile),
            delta,
        )

    @property
    def n_agents(self):
        return len(self.Q_lo)

    def corner(self, q_side, r_side):
        """Stacked weights with ``Q`` from side ``q_side`` and ``R`` from ``r_side`` ('lo'/'hi')."""
        Q = self.Q_lo if q_side == "lo" else self.Q_hi
        R = self.R_lo if r_side == "lo" else self.R_hi
        return CostWeights(block_diag(*Q), block_diag(*R))

    def corners(self):
        return [self.corner(q, r) for q, r in itertools.product(("lo", "hi"), repeat=2)]


@dataclass(frozen=True)
class Violation:
    agent: int
    matrix: str
    side: str
    margin: float


@dataclass(frozen=True)
class EfficiencyCertificate:
    T: int
    alpha_T: float
    rho_T: float
    gamma_T: float
    eps_T: object
    valid: bool
    identity_residual: object = None


def _order_violation(agent, name, side, lower, upper):
    margin = min_eig(upper - lower)
    scale = max(1.0, float(np.max(np.abs(upper))))
    if margin < -PSD_TOL * scale:
        return Violation(agent, name, side, margin)
    return None


def validate_type_bounds(theta, env):
    """Check ``Q_lo <= Q <= Q_hi`` and ``R_lo <= R <= R_hi`` for one agent.

    Returns a list of :class:`Violation`; empty means admissible.
    """
    i = theta.agent
    if theta.Q.shape != env.Q_lo[i].shape or theta.R.shape != env.R_lo[i].shape:
        raise InvalidParameterError(f"agent {i} type does not match envelope dimensions")
    found = [
        _order_violation(i, "Q", "lower", env.Q_lo[i], theta.Q),
        _order_violation(i, "Q", "upper", theta.Q, env.Q_hi[i]),
        _order_violation(i, "R", "lower", env.R_lo[i], theta.R),
        _order_violation(i, "R", "upper", theta.R, env.R_hi[i]),
    ]
    return [v for v in found if v is not None]


def validate_type_rate(theta_t, theta_next, delta):
    """Check ``(1-delta) W_t <= W_{t+1} <= (1+delta) W_t`` for ``W`` in ``Q, R``."""
    if theta_t.agent != theta_next.agent:
        raise InvalidParameterError("rate check needs two types of the same agent")
    if theta_t.Q.shape != theta_next.Q.shape or theta_t.R.shape != theta_next.R.shape:
        raise InvalidParameterError("rate check needs matching dimensions")
    i = theta_t.agent
    found = [
        _order_violation(i, "Q", "lower", (1 - delta) * theta_t.Q, theta_next.Q),
        _order_violation(i, "Q", "upper", theta_next.Q, (1 + delta) * theta_t.Q),
        _order_violation(i, "R", "lower", (1 - delta) * theta_t.R, theta_next.R),
        _order_violation(i, "R", "upper", theta_next.R, (1 + delta) * theta_t.R),
    ]
    return [v for v in found if v is not None]


def validate_stream(stream, env, agents=None):
    """Bounds and rate checks over a profile stream.

    Returns ``[(step, Violation), ...]``. Only ``agents`` (default: all) are
    checked; consecutive identical profile objects are checked once.
    """
    stream = [stream] if isinstance(stream, TypeProfile) else list(stream)
    agents = range(env.n_agents) if agents is None else agents
    out = []
    prev = None
    for k, profile in enumerate(stream):
        if profile is prev:
            continue
        for i in agents:
            out.extend((k, v) for v in validate_type_bounds(profile[i], env))
            if prev is not None:
                out.extend((k, v) for v in validate_type_rate(prev[i], profile[i], env.delta))
        prev = profile
    return out


def _max_ratio(num, den):
    """Largest ``a`` with ``a den >= num`` (``den`` must be PD)."""
    return float(generalized_eigvalsh(num, den)[-1])


def compute_alpha(plant, w, T, ladder=None):
    """Ratio ``alpha_{T+1}``: smallest ``a`` with ``a P_T >= P_{T+1}``.

    Raises :class:`DegeneracyError` when ``P_T`` is singular.
    """
    T = int(T)
    if T < 1:
        raise InvalidParameterError(f"T must be >= 1, got {T}")
    if ladder is None or ladder.horizon < T + 1:
        ladder = riccati_finite(plant, w, T + 1)
    return _max_ratio(ladder.P[T + 1], ladder.P[T])


def envelope_alpha(plant, env, T):
    """Conservative ``alpha_{T+1}``: maximum over the four envelope corners."""
    return max(compute_alpha(plant, w, T) for w in env.corners())


def compute_rho(plant, env, T, ladder=None):
    """Largest ``r`` with ``r Pbar_T <= Q_lo``; ``Pbar`` uses ``(Q_hi, R_hi)``."""
    T = int(T)
    if T < 1:
        raise InvalidParameterError(f"T must be >= 1, got {T}")
    if ladder is None or ladder.horizon < T:
        ladder = riccati_finite(plant, env.corner("hi", "hi"), T)
    Q_lo = env.corner("lo", "lo").Q
    return float(generalized_eigvalsh(Q_lo, ladder.P[T])[0])


def compute_gamma(alpha, rho, delta):
    if not 0.0 <= delta < 1.0:
        raise InvalidParameterError(f"delta must lie in [0, 1), got {delta}")
    return (1.0 - rho) * alpha / (1.0 - delta)


def compute_eps(rho, gamma, delta, T):
    if not gamma < 1.0:
        raise NoCertificateError(f"gamma_T = {gamma:.6g} >= 1, no efficiency certificate")
    return rho * (1.0 - delta) ** (1 - T) / (1.0 - gamma) - 1.0


def _identity_residual(alpha, rho, gamma, delta):
    # both sides of the bound on J_mpc / J_T must coincide
    lhs = 1.0 + (alpha + delta - 1.0) / alpha * gamma / (1.0 - gamma)
    rhs = rho / (1.0 - gamma)
    return abs(lhs - rhs) / max(1.0, abs(rhs))


def _assemble(T, alpha, rho, delta):
    gamma = compute_gamma(alpha, rho, delta)
    if not gamma < 1.0:
        return EfficiencyCertificate(T, alpha, rho, gamma, None, False)
    eps = compute_eps(rho, gamma, delta, T)
    resid = _identity_residual(alpha, rho, gamma, delta)
    if resid > IDENTITY_RTOL:
        warnings.warn(
            f"certificate identity mismatch {resid:.3g} at T={T}", RuntimeWarning, stacklevel=3
        )
    return EfficiencyCertificate(T, alpha, rho, gamma, eps, True, resid)


def certificate_table(plant, env, horizons, weights=None):
    """Certificates for several horizons, sharing one set of Riccati ladders.

    ``alpha_T`` is taken from the weight instance ``weights`` when given,
    otherwise as the maximum over the envelope corners.
    """
    horizons = [int(T) for T in horizons]
    T_max = max(horizons)
    sets = [weights] if weights is not None else env.corners()
    ladders = [riccati_finite(plant, w, T_max) for w in sets]
    upper = riccati_finite(plant, env.corner("hi", "hi"), T_max)
    out = []
    for T in horizons:
        if T < 2:
            # P_0 = 0, so no finite alpha_1 exists
            out.append(EfficiencyCertificate(T, np.inf, compute_rho(plant, env, T, upper), np.inf, None, False))
            continue
        alpha = max(_max_ratio(l.P[T], l.P[T - 1]) for l in ladders)
        rho = compute_rho(plant, env, T, upper)
        out.append(_assemble(T, alpha, rho, env.delta))
    return out


def certify(plant, env, T, weights=None):
    return certificate_table(plant, env, [T], weights)[0]


def min_certified_horizon(plant, env, T_max, weights=None):
    """Smallest ``T <= T_max`` with ``gamma_T < 1``, or ``None``."""
    sets = [weights] if weights is not None else env.corners()
    ladders = [riccati_finite(plant, w, T_max) for w in sets]
    upper = riccati_finite(plant, env.corner("hi", "hi"), T_max)
    Q_lo = env.corner("lo", "lo").Q
    for T in range(2, T_max + 1):
        alpha = max(_max_ratio(l.P[T], l.P[T - 1]) for l in ladders)
        rho = float(generalized_eigvalsh(Q_lo, upper.P[T])[0])
        if compute_gamma(alpha, rho, env.delta) < 1.0:
            return T
    return None


def closed_loop_cost_matrix(plant, gain, weights):
    """``S`` with ``x' S x`` the infinite-horizon cost of ``u = -gain x``."""
    Acl = plant.A - plant.B @ gain
    if np.max(np.abs(np.linalg.eigvals(Acl))) >= 1.0:
        raise InstabilityError("closed loop is not Schur stable; the cost is infinite")
    stage = weights.Q + gain.T @ weights.R @ gain
    S = solve_discrete_lyapunov(Acl.T, stage)
    return 0.5 * (S + S.T)


def optimal_cost_matrix(plant, stream):
    """Optimal infinite-horizon cost matrix from step 0 under a weight stream.

    A single profile gives the DARE solution. A finite list is held at its
    last entry afterwards and is handled by a backward recursion seeded with
    that entry's DARE solution.
    """
    if isinstance(stream, (TypeProfile, CostWeights)):
        return dare_fixed_point(plant, stream).P
    stream = list(stream)
    P = dare_fixed_point(plant, stream[-1]).P
    for profile in reversed(stream):
        w = profile.weights
        P, _ = riccati_step(plant.A, plant.B, P, w.Q, w.R)
    return P


def mpc_cost(plant, x0, stream, T):
    """Realized infinite-horizon cost of the receding-horizon policy from ``x0``.

    With a single profile it is computed exactly from a Lyapunov equation.
    A finite stream is simulated, then the tail from the final state is
    added exactly under the last profile held constant.
    """
    if isinstance(stream, TypeProfile):
        ctrl = RecedingHorizonController(T).fit(plant, stream)
        S = closed_loop_cost_matrix(plant, ctrl.gain_, stream.weights)
        x0 = np.asarray(x0, dtype=float)
        return float(x0 @ S @ x0)
    stream = list(stream)
    traj = run_mpc(plant, x0, stream, T, len(stream))
    last = stream[-1]
    ctrl = RecedingHorizonController(T).fit(plant, last)
    S = closed_loop_cost_matrix(plant, ctrl.gain_, last.weights)
    xf = traj.final_state
    return traj.total_cost + float(xf @ S @ xf)


@dataclass(frozen=True)
class SandwichReport:
    certificate: EfficiencyCertificate
    J: np.ndarray
    J_mpc: np.ndarray
    max_ratio: float
    bound: float


def certify_sandwich(plant, env, w_true_stream, T, x_samples, rtol=1e-6, certificate=None):
    """Check ``J(x) <= J_mpc(x) <= (1 + eps_T) J(x)`` on sample states.

    Raises :class:`NoCertificateError` without a valid certificate and
    :class:`CertificateFalsifiedError` (carrying the offending state) when a
    sample violates either side beyond relative tolerance ``rtol``.
    """
    cert = certificate or certify(plant, env, T)
    if not cert.valid:
        raise NoCertificateError(f"gamma_T = {cert.gamma_T:.6g} >= 1 at T={T}")
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    P = optimal_cost_matrix(plant, w_true_stream)
    J = np.einsum("ij,jk,ik->i", X, P, X)
    if isinstance(w_true_stream, TypeProfile):
        ctrl = RecedingHorizonController(T).fit(plant, w_true_stream)
        S = closed_loop_cost_matrix(plant, ctrl.gain_, w_true_stream.weights)
        J_mpc = np.einsum("ij,jk,ik->i", X, S, X)
    else:
        J_mpc = np.array([mpc_cost(plant, x, w_true_stream, T) for x in X])
    bound = 1.0 + cert.eps_T
    for x, j, jm in zip(X, J, J_mpc):
        if jm < j * (1.0 - rtol) or jm > bound * j * (1.0 + rtol):
            raise CertificateFalsifiedError(
                f"sample violates {j:.6g} <= {jm:.6g} <= {bound * j:.6g}", witness=x
            )
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(J > 0, J_mpc / J, 1.0)
    return SandwichReport(cert, J, J_mpc, float(np.max(ratios)), bound)


def random_weight_walk(profile, env, steps, rng, delta=None):
    """Random admissible stream: diagonal factors drift by at most ``delta`` per step.

    Every step rescales each diagonal entry of every agent's ``Q`` and ``R``
    by a factor in ``[1 - delta, 1 + delta]``, clipped to the envelope.
    Requires diagonal weights and a diagonal envelope.
    """
    delta = env.delta if delta is None else delta
    q = [np.diag(t.Q).copy() for t in profile]
    r = [np.diag(t.R).copy() for t in profile]
    out = [profile]
    for _ in range(steps - 1):
        types = []
        for i, t in enumerate(profile):
            q[i] = np.clip(
                q[i] * rng.uniform(1 - delta, 1 + delta, q[i].shape),
                np.diag(env.Q_lo[i]),
                np.diag(env.Q_hi[i]),
            )
            r[i] = np.clip(
                r[i] * rng.uniform(1 - delta, 1 + delta, r[i].shape),
                np.diag(env.R_lo[i]),
                np.diag(env.R_hi[i]),
            )
            types.append(type(t)(i, np.diag(q[i]), np.diag(r[i])))
        out.append(TypeProfile(types))
    return out


def walk_gamma(plant, env, stream, T):
    """``gamma_T`` whose ``alpha_T`` is the maximum over the stream's weight instances."""
    if T < 2:
        return np.inf
    seen = {}
    for p in stream:
        seen.setdefault(id(p), p)
    alpha = 0.0
    for p in seen.values():
        ladder = riccati_finite(plant, p, T)
        alpha = max(alpha, _max_ratio(ladder.P[T], ladder.P[T - 1]))
    rho = compute_rho(plant, env, T)
    return compute_gamma(alpha, rho, env.delta)
