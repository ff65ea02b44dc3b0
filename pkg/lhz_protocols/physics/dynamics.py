"""
Closed-system time evolution and ground-state fidelity.

Integrates i d|psi>/dt = H(t/T)|psi> (hbar = 1) with fixed-step classical
RK4 on sparse matrix-vector products, starting from the ground state of the
transverse-field driver, and scores the final state against the ground
space of H_p + C H_c.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import GroupEvaluationError, IntegrationError, LhzError
from ..logging_config import get_logger
from ..utils.timing import retry_with_escalation
from ..workers import ordered_map
from .hamiltonians import PassageOperators, final_ground_space, passage_operators
from .parity import PhysicalInstance
from .schedule import Schedule

logger = get_logger(__name__)


@dataclass(frozen=True)
class EvolutionSettings:
    """
    Integrator policy.

    Attributes:
        steps_per_unit: RK4 steps per unit of T * ||H||_est
        min_steps: Lower bound on the step count
        drift_tolerance: Largest accepted per-step norm drift
        max_attempts: Attempts with doubled steps after a drift failure
        degeneracy_tolerance: Energy window of the final ground space
    """

    steps_per_unit: float = 40.0
    min_steps: int = 2000
    drift_tolerance: float = 1e-6
    max_attempts: int = 3
    degeneracy_tolerance: float = 1e-9


DEFAULT_SETTINGS = EvolutionSettings()


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over the 2^K computational basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'amplitudes', np.asarray(self.amplitudes, dtype=complex))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def uniform(cls, dim: int) -> 'StateVector':
        """All-plus product state, the ground state of -sum sigma_x."""
        return cls(np.full(dim, 1.0 / math.sqrt(dim), dtype=complex))


@dataclass(frozen=True)
class GroundOverlap:
    """Weight of a state on the final ground space, with that space's dimension."""

    fidelity: float
    degeneracy: int

    @property
    def degenerate(self) -> bool:
        return self.degeneracy > 1


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    final_state: StateVector
    fidelity: float
    norm_drift: float
    steps_used: int
    annealing_time: float
    ground_degeneracy: int = 1
    instance_id: str = ''

    @property
    def degenerate_final_state(self) -> bool:
        return self.ground_degeneracy > 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'instance_id': self.instance_id,
            'T': self.annealing_time,
            'fidelity': self.fidelity,
            'norm_drift': self.norm_drift,
            'steps_used': self.steps_used,
        }


def step_count(ops: PassageOperators, annealing_time: float, settings: EvolutionSettings = DEFAULT_SETTINGS) -> int:
    """max(min_steps, ceil(steps_per_unit * T * ||H||_est))."""
    return max(
        settings.min_steps,
        int(math.ceil(settings.steps_per_unit * annealing_time * ops.norm_bound)),
    )


def fidelity(
    state: StateVector,
    phys: PhysicalInstance,
    tolerance: float = 1e-9,
    operators: Optional[PassageOperators] = None,
) -> GroundOverlap:
    """
    Squared norm of the projection of state onto the final ground space.

    For a unique ground state this is |<psi|ground>|^2; degeneracy is
    reported alongside rather than rejected.
    """
    _, indices = final_ground_space(phys, tolerance, operators)
    amplitudes = state.amplitudes
    total = float(np.vdot(amplitudes, amplitudes).real)
    weight = float(np.sum(np.abs(amplitudes[indices]) ** 2))
    value = weight / total if total > 0 else 0.0
    return GroundOverlap(fidelity=min(max(value, 0.0), 1.0), degeneracy=len(indices))


def evolve(
    phys: PhysicalInstance,
    schedule: Schedule,
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    steps: Optional[int] = None,
    operators: Optional[PassageOperators] = None,
    initial_state: Optional[StateVector] = None,
) -> EvolutionResult:
    """
    Evolve the driver ground state under a schedule up to t = T.

    Args:
        phys: Physical instance
        schedule: Protocol with annealing time T
        settings: Integrator policy
        steps: Override for the step count
        operators: Prebuilt operators (defaults to the memoised set)
        initial_state: Override for the starting state

    Returns:
        EvolutionResult

    Raises:
        IntegrationError: If the per-step norm drift reaches the tolerance
    """
    ops = operators or passage_operators(phys)
    t_anneal = schedule.annealing_time
    n_steps = steps or step_count(ops, t_anneal, settings)
    dt = t_anneal / n_steps

    half_grid = np.arange(2 * n_steps + 1, dtype=float) / (2 * n_steps)
    half_grid[-1] = 1.0
    s_half = schedule.sample(half_grid)
    c_half = schedule.constraint_samples(half_grid, s_half)

    driver = ops.initial.matrix
    problem = ops.problem.entries
    constraint = ops.constraint.entries

    def rhs(j: int, vector: np.ndarray) -> np.ndarray:
        s, c = s_half[j], c_half[j]
        h_vector = (1.0 - s) * (driver @ vector) + (s * problem + c * constraint) * vector
        return -1j * h_vector

    start = initial_state or StateVector.uniform(ops.dim)
    psi = start.amplitudes.copy()
    max_drift = 0.0

    for n in range(n_steps):
        j = 2 * n
        k1 = rhs(j, psi)
        k2 = rhs(j + 1, psi + 0.5 * dt * k1)
        k3 = rhs(j + 1, psi + 0.5 * dt * k2)
        k4 = rhs(j + 2, psi + dt * k3)
        psi = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        norm = math.sqrt(float(np.vdot(psi, psi).real))
        drift = abs(norm - 1.0)
        if not drift < settings.drift_tolerance:
            raise IntegrationError(drift, n_steps, phys.instance_id)
        max_drift = max(max_drift, drift)
        psi /= norm

    final_state = StateVector(psi)
    overlap = fidelity(final_state, phys, settings.degeneracy_tolerance, ops)
    if overlap.degenerate:
        logger.warning(
            f'{phys.instance_id or "instance"}: final ground space is '
            f'{overlap.degeneracy}-fold degenerate'
        )

    return EvolutionResult(
        final_state=final_state,
        fidelity=overlap.fidelity,
        norm_drift=max_drift,
        steps_used=n_steps,
        annealing_time=t_anneal,
        ground_degeneracy=overlap.degeneracy,
        instance_id=phys.instance_id,
    )


def evolve_with_retry(
    phys: PhysicalInstance,
    schedule: Schedule,
    settings: EvolutionSettings = DEFAULT_SETTINGS,
) -> EvolutionResult:
    """Evolve, doubling the step count after each unitarity failure."""
    base_steps = step_count(passage_operators(phys), schedule.annealing_time, settings)
    return retry_with_escalation(
        lambda attempt: evolve(phys, schedule, settings, steps=base_steps * 2 ** attempt),
        max_attempts=settings.max_attempts,
        retry_on=(IntegrationError,),
    )


def _evaluate_member(task: Tuple[Schedule, PhysicalInstance, EvolutionSettings]) -> Tuple[str, Optional[float], str]:
    schedule, phys, settings = task
    try:
        return phys.instance_id, evolve_with_retry(phys, schedule, settings).fidelity, ''
    except LhzError as e:
        return phys.instance_id, None, str(e)


def instance_fidelities(
    schedule: Schedule,
    group: Sequence[PhysicalInstance],
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> List[float]:
    """
    Single-instance fidelities of a schedule on every group member, in order.

    Raises:
        GroupEvaluationError: Listing every member whose evolution failed
    """
    results = ordered_map(_evaluate_member, [(schedule, phys, settings) for phys in group], workers)
    failing = [instance_id for instance_id, value, _ in results if value is None]
    if failing:
        for instance_id, value, message in results:
            if value is None:
                logger.error(f'{instance_id}: {message}')
        raise GroupEvaluationError(failing)
    return [value for _, value, _ in results]


def group_fidelity(
    schedule: Schedule,
    group: Sequence[PhysicalInstance],
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
) -> float:
    """
    Average group fidelity: arithmetic mean of single-instance fidelities,
    summed in instance order.
    """
    if not group:
        raise ValueError('group_fidelity needs a non-empty group')
    values = instance_fidelities(schedule, group, settings, workers)
    return math.fsum(values) / len(values)
