"""VCG-style online tax mechanism wrapped around the MPC decision rule.

At every step agent ``i`` pays

    p_t^i = sum_{j != i} c_t^j(x_t^j, u_t^j) + K_t^i

where the stage costs of the other agents are evaluated under their reported
types and ``K_t^i = -sum_{j != i} c_t^j`` along a counterfactual closed loop in
which agent ``i`` is absent (its input pinned to zero, its cost dropped).
The counterfactual never reads agent ``i``'s reports, so ``K^i`` cannot be
influenced by them.
"""

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_vector
from .bounds import validate_stream
from .exceptions import InadmissibleReportError, InvalidParameterError
from .lq_solver import dare_fixed_point
from .mpc import run_mpc, simulate_closed_loop
from .power_model import DiscretePlant, Partition
from .profiles import CostWeights, TypeProfile, TypeVector, expand_stream, stage_cost, stage_costs

__all__ = [
    "CounterfactualRun",
    "TaxLedger",
    "VCGMechanism",
    "compute_taxes",
    "incentive_gap",
    "marginal_k",
    "misreport_search",
    "net_cost",
    "run_counterfactual",
    "stage_cost",
]

DEFAULT_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)


@dataclass
class CounterfactualRun:
    """Closed loop with ``excluded`` absent; ``u`` keeps a zero column for it."""

    excluded: int
    x: np.ndarray
    u: np.ndarray
    others_costs: np.ndarray

    @property
    def steps(self):
        return self.others_costs.shape[0]


@dataclass
class TaxLedger:
    """Per-step taxes ``p``, offsets ``K`` and tax-to-go ``pi``, each ``(steps, n_agents)``."""

    p: np.ndarray
    K: np.ndarray
    pi: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.p.shape != self.K.shape:
            raise InvalidParameterError("tax and offset arrays differ in shape")
        self.pi = np.cumsum(self.p[::-1], axis=0)[::-1]

    @classmethod
    def zeros(cls, steps, n_agents):
        return cls(np.zeros((steps, n_agents)), np.zeros((steps, n_agents)))

    @property
    def total(self):
        """Tax-to-go from step 0 for each agent."""
        if self.pi.shape[0] == 0:
            return np.zeros(self.pi.shape[1])
        return self.pi[0]


def _absent_weights(profile, excluded, partition, keep_input):
    Qs = [np.zeros_like(t.Q) if t.agent == excluded else t.Q for t in profile]
    if keep_input:
        # u_i has no effect on the pinned plant; any PD weight gives u_i = 0
        Rs = [np.eye(t.R.shape[0]) if t.agent == excluded else t.R for t in profile]
    else:
        Rs = [t.R for t in profile if t.agent != excluded]
    return CostWeights(block_diag(*Qs), block_diag(*Rs))


def _absent_plant(plant, excluded, keep_input):
    cols = plant.partition.inputs[excluded]
    if keep_input:
        B = plant.B.copy()
        B[:, cols] = 0.0
        return DiscretePlant(plant.A, B, plant.dt, plant.partition)
    keep = np.ones(plant.n_inputs, dtype=bool)
    keep[cols] = False
    return DiscretePlant(
        plant.A,
        plant.B[:, keep],
        plant.dt,
        Partition.single(plant.n_states, int(keep.sum())),
    )


def run_counterfactual(plant, x0, profiles, excluded, horizon, steps, method="reduce"):
    """Closed loop of the society without agent ``excluded``.

    ``profiles`` is the reported stream; the excluded agent's entries are
    never read. ``method="reduce"`` deletes the agent's input columns from
    ``B``; ``method="pin"`` keeps them but zeroes them, which must give the
    same trajectory.
    """
    if method not in ("reduce", "pin"):
        raise InvalidParameterError(f"unknown counterfactual method {method!r}")
    partition = plant.partition
    if not 0 <= excluded < partition.n_agents:
        raise InvalidParameterError(f"agent {excluded} out of range")
    keep_input = method == "pin"
    x0 = check_vector(x0, plant.n_states, "x0")
    steps = int(steps)
    stream = expand_stream(profiles, steps)

    reduced = _absent_plant(plant, excluded, keep_input)
    if reduced.n_inputs == 0:
        xs = np.zeros((steps + 1, plant.n_states))
        xs[0] = x0
        for k in range(steps):
            xs[k + 1] = plant.A @ xs[k]
        us_red = np.zeros((steps, 0))
    else:
        weights = []
        last, last_w = None, None
        for profile in stream:
            if profile is not last:
                last, last_w = profile, _absent_weights(profile, excluded, partition, keep_input)
            weights.append(last_w)
        xs, us_red = simulate_closed_loop(reduced, x0, weights, horizon, steps)

    if keep_input:
        us = us_red
        us[:, partition.inputs[excluded]] = 0.0
    else:
        us = np.zeros((steps, plant.n_inputs))
        keep = np.ones(plant.n_inputs, dtype=bool)
        keep[partition.inputs[excluded]] = False
        us[:, keep] = us_red
    per_agent = stage_costs(xs, us, stream, partition)
    return CounterfactualRun(excluded, xs, us, _others(per_agent, excluded))


def _others(per_agent, agent):
    mask = np.arange(per_agent.shape[1]) != agent
    return per_agent[:, mask].sum(axis=1)


def marginal_k(run, t):
    """``K_t^i``: minus the others' stage cost at step ``t`` of the counterfactual."""
    if not 0 <= t < run.steps:
        raise IndexError(f"step {t} outside counterfactual of length {run.steps}")
    return -float(run.others_costs[t])


def compute_taxes(traj, counterfactuals):
    """Build the tax ledger of a run from one counterfactual per agent.

    Other agents' stage costs use their reported types, the only information
    the operator has.
    """
    n_agents = traj.partition.n_agents
    if len(counterfactuals) != n_agents:
        raise InvalidParameterError(f"need {n_agents} counterfactuals, got {len(counterfactuals)}")
    reported = traj.reported_stage_costs()
    others = np.column_stack([_others(reported, i) for i in range(n_agents)])
    K = np.zeros_like(others)
    for i in range(n_agents):
        run = counterfactuals[i]
        if run.excluded != i:
            raise InvalidParameterError(f"counterfactual {i} excludes agent {run.excluded}")
        if run.steps != traj.steps:
            raise InvalidParameterError("counterfactual and trajectory lengths differ")
        K[:, i] = -run.others_costs
    return TaxLedger(others + K, K)


def net_cost(agent, traj, ledger, true_types=None):
    """Quasilinear cost of ``agent``: own true control cost plus its total tax."""
    if true_types is None:
        own = traj.stage_costs[:, agent].sum()
    else:
        own = stage_costs(traj.x, traj.u, true_types, traj.partition)[:, agent].sum()
    return float(own + ledger.total[agent])


def optimal_cost(plant, x0, profile):
    """Infinite-horizon optimal social cost ``x0' P_inf x0`` under ``profile``."""
    P = dare_fixed_point(plant, profile).P
    x0 = np.asarray(x0, dtype=float)
    return float(x0 @ P @ x0)


def _misreport_stream(truth, agent, misreport, steps):
    truth = expand_stream(truth, steps)
    if isinstance(misreport, TypeVector):
        misreport = [misreport] * steps
    misreport = list(misreport)
    if len(misreport) < steps:
        raise InvalidParameterError(f"misreport stream has {len(misreport)} entries, need {steps}")
    out = []
    cache = {}
    for k in range(steps):
        if misreport[k].agent != agent:
            raise InvalidParameterError(f"misreport entry {k} belongs to agent {misreport[k].agent}")
        key = (id(truth[k]), id(misreport[k]))
        profile = cache.get(key)
        if profile is None:
            profile = cache[key] = truth[k].replace(misreport[k])
        out.append(profile)
    return out


class _GapEvaluator:
    """Shares the truthful run and the counterfactual across misreports."""

    def __init__(self, plant, x0, truth, agent, horizon, steps, taxes, envelope, method):
        self.plant, self.agent, self.horizon = plant, agent, horizon
        self.steps, self.taxes, self.envelope = int(steps), taxes, envelope
        self.x0 = check_vector(x0, plant.n_states, "x0")
        self.truth = expand_stream(truth, self.steps)
        self.truth_run = run_mpc(plant, self.x0, self.truth, horizon, self.steps)
        self.K = None
        if taxes:
            cf = run_counterfactual(plant, self.x0, self.truth, agent, horizon, self.steps, method)
            self.K = -cf.others_costs
        self.truth_net = self._net(self.truth_run)

    def _net(self, traj):
        own = traj.stage_costs[:, self.agent].sum()
        if not self.taxes:
            return float(own)
        others = _others(traj.reported_stage_costs(), self.agent)
        return float(own + others.sum() + self.K.sum())

    def admissible(self, stream):
        if self.envelope is None:
            return []
        return validate_stream(stream, self.envelope, agents=[self.agent])

    def gap(self, misreport):
        stream = _misreport_stream(self.truth, self.agent, misreport, self.steps)
        violations = self.admissible(stream)
        if violations:
            step, v = violations[0]
            raise InadmissibleReportError(
                f"step {step}: agent {v.agent} {v.matrix} violates its {v.side} bound"
            )
        traj = run_mpc(self.plant, self.x0, stream, self.horizon, self.steps, true_stream=self.truth)
        return self.truth_net - self._net(traj)


def incentive_gap(
    plant,
    x0,
    truth,
    agent,
    misreport,
    horizon,
    steps,
    envelope=None,
    taxes=True,
    counterfactual_method="reduce",
):
    """Net-cost gain of ``agent`` from reporting ``misreport`` instead of the truth.

    Both runs start at ``x0`` and every other agent reports truthfully.
    A positive value is a profitable deviation. ``misreport`` is a
    :class:`TypeVector` held constant or a per-step sequence of them.
    """
    ev = _GapEvaluator(plant, x0, truth, agent, horizon, steps, taxes, envelope, counterfactual_method)
    return ev.gap(misreport)


@dataclass
class SearchResult:
    agent: int
    best_factors: tuple
    best_misreport: object
    best_gap: float
    evaluated: int
    skipped: int
    gaps: list


def worker_count():
    env = os.environ.get("VCGMPC_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def misreport_search(
    plant,
    x0,
    truth,
    agent,
    horizon,
    steps,
    envelope=None,
    factors=DEFAULT_FACTORS,
    taxes=True,
    switch_step=None,
    workers=None,
    counterfactual_method="reduce",
):
    """Exhaustive search over multiplicative misreports of ``agent``'s diagonal weights.

    Every diagonal entry of ``Q_i`` and ``R_i`` is scaled independently by
    each value in ``factors``. Misreports are constant in time, or, with
    ``switch_step``, truthful before that step and constant after it.
    Grid points rejected by ``envelope`` are skipped and counted. Ties keep
    the earliest grid point.
    """
    ev = _GapEvaluator(plant, x0, truth, agent, horizon, steps, taxes, envelope, counterfactual_method)
    base = ev.truth[0][agent]
    nq, nr = base.Q.shape[0], base.R.shape[0]
    grid = list(itertools.product(tuple(factors), repeat=nq + nr))

    def candidate(f):
        theta = base.scaled(f[:nq], f[nq:])
        if switch_step is None:
            return theta
        return [ev.truth[k][agent] if k < switch_step else theta for k in range(ev.steps)]

    def evaluate(f):
        try:
            return ev.gap(candidate(f))
        except InadmissibleReportError:
            return None

    with ThreadPoolExecutor(max_workers=workers or worker_count()) as pool:
        gaps = list(pool.map(evaluate, grid))

    best_idx, best_gap = None, -np.inf
    for idx, g in enumerate(gaps):
        if g is not None and g > best_gap:
            best_idx, best_gap = idx, g
    skipped = sum(g is None for g in gaps)
    if best_idx is None:
        return SearchResult(agent, None, None, float("nan"), 0, skipped, gaps)
    f = grid[best_idx]
    return SearchResult(agent, f, candidate(f), float(best_gap), len(gaps) - skipped, skipped, gaps)


class VCGMechanism(BaseEstimator):
    """The MPC decision rule plus per-step VCG taxes.

    ``fit(plant, x0, reported, true=None)`` runs the main closed loop and one
    counterfactual per agent, then fills ``trajectory_``,
    ``counterfactuals_``, ``ledger_``, ``agent_costs_`` and ``net_costs_``.
    ``horizon=None`` uses the infinite-horizon LQR decision rule.
    """

    def __init__(self, horizon=50, steps=600, taxes=True, counterfactual_method="reduce"):
        self.horizon = horizon
        self.steps = steps
        self.taxes = taxes
        self.counterfactual_method = counterfactual_method

    def fit(self, plant, x0, reported, true=None):
        steps = int(self.steps)
        reported = expand_stream(reported, steps)
        traj = run_mpc(plant, x0, reported, self.horizon, steps, true_stream=true)
        n_agents = plant.partition.n_agents
        if self.taxes:
            self.counterfactuals_ = [
                run_counterfactual(plant, x0, reported, i, self.horizon, steps, self.counterfactual_method)
                for i in range(n_agents)
            ]
            self.ledger_ = compute_taxes(traj, self.counterfactuals_)
        else:
            self.counterfactuals_ = []
            self.ledger_ = TaxLedger.zeros(steps, n_agents)
        self.trajectory_ = traj
        self.agent_costs_ = traj.agent_costs
        self.net_costs_ = np.array([net_cost(i, traj, self.ledger_) for i in range(n_agents)])
        return self

    def net_cost(self, agent):
        check_is_fitted(self, "ledger_")
        return float(self.net_costs_[agent])


def as_profile(types):
    """Build a :class:`TypeProfile` from ``[(Q_i, R_i), ...]``."""
    return TypeProfile([TypeVector(i, Q, R) for i, (Q, R) in enumerate(types)])
