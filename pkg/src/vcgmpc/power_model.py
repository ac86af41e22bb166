"""Linearized multi-area load frequency control dynamics.

Each area contributes four states, ordered ``(omega, pmech, pv, delta)``:
frequency deviation, mechanical power deviation, steam valve position
deviation and rotor angle deviation. The single input per area is the
reference power command. Areas are stacked in declaration order.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ._validation import check_square
from .exceptions import InvalidParameterError

STATE_NAMES = ("omega", "pmech", "pv", "delta")
STATES_PER_AREA = len(STATE_NAMES)


@dataclass(frozen=True)
class AreaParams:
    """Swing-equation parameters of one control area.

    Attributes
    ----------
    M : angular momentum (p.u. s)
    D : load-frequency damping (p.u.)
    T_CH : charging time constant (s)
    R_f : droop (frequency change per unit output change)
    T_G : governor time constant (s)
    """

    M: float
    D: float
    T_CH: float
    R_f: float
    T_G: float

    def __post_init__(self):
        for name in ("M", "D", "T_CH", "R_f", "T_G"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class TieLine:
    area_a: int
    area_b: int
    stiffness: float

    def __post_init__(self):
        if self.area_a == self.area_b:
            raise InvalidParameterError("tie line must join two distinct areas")
        if not np.isfinite(self.stiffness) or self.stiffness < 0:
            raise InvalidParameterError(f"tie stiffness must be >= 0, got {self.stiffness}")


@dataclass(frozen=True)
class NetworkModel:
    areas: tuple
    tie_lines: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "areas", tuple(self.areas))
        object.__setattr__(self, "tie_lines", tuple(self.tie_lines))
        if not self.areas:
            raise InvalidParameterError("network needs at least one area")
        for tie in self.tie_lines:
            for idx in (tie.area_a, tie.area_b):
                if not 0 <= idx < len(self.areas):
                    raise InvalidParameterError(
                        f"tie line references area {idx}, network has {len(self.areas)}"
                    )

    @property
    def n_areas(self):
        return len(self.areas)


@dataclass(frozen=True)
class Partition:
    """Agent-wise index ranges into the stacked state and input vectors."""

    states: tuple
    inputs: tuple

    def __post_init__(self):
        if len(self.states) != len(self.inputs):
            raise InvalidParameterError("state and input partitions disagree on agent count")

    @classmethod
    def uniform(cls, n_agents, n_states=STATES_PER_AREA, n_inputs=1):
        states = tuple(slice(i * n_states, (i + 1) * n_states) for i in range(n_agents))
        inputs = tuple(slice(i * n_inputs, (i + 1) * n_inputs) for i in range(n_agents))
        return cls(states, inputs)

    @classmethod
    def single(cls, n_states, n_inputs):
        return cls((slice(0, n_states),), (slice(0, n_inputs),))

    @property
    def n_agents(self):
        return len(self.states)

    @property
    def n_states(self):
        return self.states[-1].stop

    @property
    def n_inputs(self):
        return self.inputs[-1].stop

    def state_size(self, agent):
        s = self.states[agent]
        return s.stop - s.start

    def input_size(self, agent):
        s = self.inputs[agent]
        return s.stop - s.start


@dataclass(frozen=True)
class ContinuousPlant:
    A_c: np.ndarray
    B_c: np.ndarray
    partition: Partition = field(default=None)

    def __post_init__(self):
        A = check_square(self.A_c, "A_c")
        B = np.asarray(self.B_c, dtype=float).reshape(A.shape[0], -1)
        object.__setattr__(self, "A_c", A)
        object.__setattr__(self, "B_c", B)
        if self.partition is None:
            object.__setattr__(self, "partition", Partition.single(A.shape[0], B.shape[1]))
        _check_partition(self.partition, A.shape[0], B.shape[1])


@dataclass(frozen=True)
class DiscretePlant:
    """Discrete-time LTI plant ``x[k+1] = A x[k] + B u[k]``."""

    A: np.ndarray
    B: np.ndarray
    dt: float = 1.0
    partition: Partition = field(default=None)

    def __post_init__(self):
        A = check_square(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim < 2:
            B = B.reshape(A.shape[0], -1)
        if B.shape[0] != A.shape[0]:
            raise InvalidParameterError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
        if not self.dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.partition is None:
            object.__setattr__(self, "partition", Partition.single(A.shape[0], B.shape[1]))
        _check_partition(self.partition, A.shape[0], B.shape[1])

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]


def _check_partition(partition, n, m):
    if partition.n_states != n or partition.n_inputs != m:
        raise InvalidParameterError(
            f"partition covers ({partition.n_states}, {partition.n_inputs}), plant is ({n}, {m})"
        )


def build_area_block(p):
    """Return the 4x4 local dynamics block and 4x1 input column of one area.

    The tie-line contribution to the frequency row is added by
    :func:`assemble_network`.
    """
    if not isinstance(p, AreaParams):
        p = AreaParams(*p)
    a = np.array(
        [
            [-p.D / p.M, 1.0 / p.M, 0.0, 0.0],
            [0.0, -1.0 / p.T_CH, 1.0 / p.T_CH, 0.0],
            [-1.0 / (p.R_f * p.T_G), 0.0, -1.0 / p.T_G, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    b = np.array([[0.0], [0.0], [1.0 / p.T_G], [0.0]])
    return a, b


def assemble_network(net):
    n_areas = net.n_areas
    k = STATES_PER_AREA
    A_c = np.zeros((k * n_areas, k * n_areas))
    B_c = np.zeros((k * n_areas, n_areas))
    for i, area in enumerate(net.areas):
        a, b = build_area_block(area)
        A_c[k * i : k * (i + 1), k * i : k * (i + 1)] = a
        B_c[k * i : k * (i + 1), i : i + 1] = b
    for tie in net.tie_lines:
        for i, j in ((tie.area_a, tie.area_b), (tie.area_b, tie.area_a)):
            coeff = tie.stiffness / net.areas[i].M
            A_c[k * i, k * i + 3] -= coeff
            A_c[k * i, k * j + 3] += coeff
    return ContinuousPlant(A_c, B_c, Partition.uniform(n_areas))


def discretize(plant, dt, method="zoh"):
    """Discretize a continuous plant with sample time ``dt``.

    ``method="zoh"`` is the exact zero-order hold computed from the
    exponential of the augmented matrix ``[[A_c, B_c], [0, 0]]``.
    ``method="euler"`` (forward Euler) exists for sensitivity studies.
    """
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    n, m = plant.B_c.shape
    if method == "zoh":
        aug = np.zeros((n + m, n + m))
        aug[:n, :n] = plant.A_c
        aug[:n, n:] = plant.B_c
        phi = expm(aug * dt)
        A, B = phi[:n, :n], phi[:n, n:]
    elif method == "euler":
        A = np.eye(n) + dt * plant.A_c
        B = dt * plant.B_c
    else:
        raise InvalidParameterError(f"unknown discretization method {method!r}")
    return DiscretePlant(A, B, dt, plant.partition)


def state_labels(n_areas):
    """Column labels ``area{i}_{state}`` (1-based areas) in state order."""
    return [f"area{i + 1}_{name}" for i in range(n_areas) for name in STATE_NAMES]


def state_index(area, name):
    return STATES_PER_AREA * area + STATE_NAMES.index(name)
