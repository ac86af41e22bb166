"""Agent types, type profiles and closed-loop trajectory records."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag

from ._validation import as_matrix, check_pd, check_psd
from .exceptions import InvalidParameterError


@dataclass(frozen=True)
class CostWeights:
    """Stacked quadratic weights: ``Q`` PSD over the state, ``R`` PD over the input."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", check_psd(self.Q, "Q"))
        object.__setattr__(self, "R", check_pd(self.R, "R"))

    def scaled(self, q_scale, r_scale=None):
        r_scale = q_scale if r_scale is None else r_scale
        return CostWeights(q_scale * self.Q, r_scale * self.R)


class TypeVector:
    """Private quadratic weights ``(Q_i, R_i)`` of one agent."""

    __slots__ = ("agent", "Q", "R")

    def __init__(self, agent, Q, R):
        self.agent = int(agent)
        self.Q = check_psd(as_matrix(Q, "Q"), f"Q of agent {agent}")
        self.R = check_pd(as_matrix(R, "R"), f"R of agent {agent}")
        self.Q.setflags(write=False)
        self.R.setflags(write=False)

    def scaled(self, q_factors=1.0, r_factors=1.0):
        """Multiply the weights entrywise-diagonally by the given factors.

        Factors act as ``diag(f)^(1/2) W diag(f)^(1/2)``, which for a diagonal
        ``W`` is simply a per-entry scaling of the diagonal.
        """
        qf = np.sqrt(np.broadcast_to(np.asarray(q_factors, float), (self.Q.shape[0],)))
        rf = np.sqrt(np.broadcast_to(np.asarray(r_factors, float), (self.R.shape[0],)))
        return TypeVector(self.agent, qf[:, None] * self.Q * qf, rf[:, None] * self.R * rf)

    def __eq__(self, other):
        if not isinstance(other, TypeVector):
            return NotImplemented
        return (
            self.agent == other.agent
            and np.array_equal(self.Q, other.Q)
            and np.array_equal(self.R, other.R)
        )

    __hash__ = None

    def __repr__(self):
        return f"TypeVector(agent={self.agent}, Q={self.Q.tolist()}, R={self.R.tolist()})"


class TypeProfile:
    """One type vector per agent, for a single time step."""

    def __init__(self, types):
        types = tuple(types)
        if not types:
            raise InvalidParameterError("a type profile needs at least one agent")
        for i, theta in enumerate(types):
            if theta.agent != i:
                raise InvalidParameterError(f"entry {i} carries agent index {theta.agent}")
        self.types = types

    def __len__(self):
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __getitem__(self, agent):
        return self.types[agent]

    def __eq__(self, other):
        if not isinstance(other, TypeProfile):
            return NotImplemented
        return self.types == other.types

    __hash__ = None

    def __repr__(self):
        return f"TypeProfile({list(self.types)!r})"

    @cached_property
    def weights(self):
        return CostWeights(
            block_diag(*(t.Q for t in self.types)), block_diag(*(t.R for t in self.types))
        )

    def replace(self, theta):
        types = list(self.types)
        types[theta.agent] = theta
        return TypeProfile(types)

    def check_partition(self, partition):
        if len(self) != partition.n_agents:
            raise InvalidParameterError(
                f"profile has {len(self)} agents, partition has {partition.n_agents}"
            )
        for theta in self.types:
            n_i = partition.state_size(theta.agent)
            m_i = partition.input_size(theta.agent)
            if theta.Q.shape != (n_i, n_i) or theta.R.shape != (m_i, m_i):
                raise InvalidParameterError(
                    f"agent {theta.agent} weights have shapes {theta.Q.shape}, {theta.R.shape}; "
                    f"expected ({n_i}, {n_i}), ({m_i}, {m_i})"
                )


def expand_stream(stream, steps):
    """Normalize a profile stream to a list of exactly ``steps`` profiles.

    A single :class:`TypeProfile` is held constant. A sequence must cover at
    least ``steps`` entries.
    """
    if isinstance(stream, TypeProfile):
        return [stream] * steps
    stream = list(stream)
    if len(stream) < steps:
        raise InvalidParameterError(f"profile stream has {len(stream)} entries, need {steps}")
    return stream[:steps]


def segments(stream):
    """Yield ``(start, stop, profile)`` runs of identical profile objects."""
    start = 0
    for k in range(1, len(stream) + 1):
        if k == len(stream) or stream[k] is not stream[start]:
            yield start, k, stream[start]
            start = k


def stage_cost(x_i, u_i, theta):
    """Quadratic stage cost ``x_i' Q_i x_i + u_i' R_i u_i`` of one agent."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    if x_i.shape != (theta.Q.shape[0],) or u_i.shape != (theta.R.shape[0],):
        raise InvalidParameterError(
            f"dimension mismatch: x {x_i.shape}, u {u_i.shape} for agent {theta.agent}"
        )
    return float(x_i @ theta.Q @ x_i + u_i @ theta.R @ u_i)


def stage_costs(x, u, stream, partition):
    """Per-step per-agent stage costs, shape ``(steps, n_agents)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    steps = u.shape[0]
    stream = expand_stream(stream, steps)
    out = np.zeros((steps, partition.n_agents))
    for start, stop, profile in segments(stream):
        xs, us = x[start:stop], u[start:stop]
        for theta in profile:
            xi = xs[:, partition.states[theta.agent]]
            ui = us[:, partition.inputs[theta.agent]]
            out[start:stop, theta.agent] = np.einsum("ti,ij,tj->t", xi, theta.Q, xi) + np.einsum(
                "ti,ij,tj->t", ui, theta.R, ui
            )
    return out


@dataclass
class TrajectoryRecord:
    """States, inputs and per-agent stage costs from one closed-loop run.

    ``x`` has ``steps + 1`` rows (the final state is kept for tail bounds),
    ``u`` and ``stage_costs`` have ``steps`` rows. Stage costs are evaluated
    under the true profiles; control was computed from the reported ones.
    """

    x: np.ndarray
    u: np.ndarray
    stage_costs: np.ndarray
    reported: list
    true: list
    partition: object
    horizon: object = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        steps = self.u.shape[0]
        if self.x.shape[0] != steps + 1 or self.stage_costs.shape[0] != steps:
            raise InvalidParameterError("trajectory arrays have inconsistent lengths")
        if len(self.reported) != steps or len(self.true) != steps:
            raise InvalidParameterError("profile records do not match trajectory length")

    @property
    def steps(self):
        return self.u.shape[0]

    @property
    def agent_costs(self):
        return self.stage_costs.sum(axis=0)

    @property
    def total_cost(self):
        return float(self.stage_costs.sum())

    @property
    def final_state(self):
        return self.x[-1]

    def reported_stage_costs(self):
        return stage_costs(self.x, self.u, self.reported, self.partition)
