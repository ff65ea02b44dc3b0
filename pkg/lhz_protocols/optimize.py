"""
Protocol optimization.

dCRAB: each super-iteration draws fresh random frequencies, optimises their
sine/cosine amplitudes with a Nelder-Mead simplex on the group fidelity,
and dresses the previous best schedule with the result. The annealing time
is escalated on a geometric grid until the target fidelity is met, then
refined by bisection.
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import HardnessError
from .logging_config import get_logger
from .physics.dynamics import DEFAULT_SETTINGS, EvolutionSettings, group_fidelity
from .physics.parity import PhysicalInstance
from .physics.schedule import BasisTerm, Schedule, linear_schedule
from .utils.timing import format_duration

logger = get_logger(__name__)

Objective = Callable[[Schedule], float]


@dataclass(frozen=True)
class DcrabConfig:
    """
    dCRAB hyperparameters.

    Attributes:
        n_superiterations: Dressing rounds
        n_frequencies_per_super: Random frequencies drawn per round (2 amplitudes each)
        inner_max_evaluations: Simplex function-evaluation budget per round
        simplex_initial_step: Edge length of the initial simplex
        seed: Seed of the frequency draws and the objective subsample
        target_fidelity: Stop once the objective reaches this value
        objective_subsample: Optimise on this many group members (None = all)
        omega_min / omega_max: Frequency draw interval
        simplex_xatol / simplex_fatol: Simplex convergence tolerances
        enforce_monotone: Score non-monotone candidates as fidelity 0
    """

    n_superiterations: int = 8
    n_frequencies_per_super: int = 1
    inner_max_evaluations: int = 200
    simplex_initial_step: float = 0.1
    seed: int = 0
    target_fidelity: float = 0.9
    objective_subsample: Optional[int] = None
    omega_min: float = 0.5
    omega_max: float = 10.0
    simplex_xatol: float = 1e-6
    simplex_fatol: float = 1e-10
    enforce_monotone: bool = False

    def problems(self) -> List[str]:
        problems = []
        for name in ('n_superiterations', 'n_frequencies_per_super', 'inner_max_evaluations'):
            if getattr(self, name) < 1:
                problems.append(f'dcrab.{name} must be positive')
        if not self.simplex_initial_step > 0:
            problems.append('dcrab.simplex_initial_step must be positive')
        if not 0.0 < self.target_fidelity < 1.0:
            problems.append('dcrab.target_fidelity must lie in (0, 1)')
        if self.objective_subsample is not None and self.objective_subsample < 1:
            problems.append('dcrab.objective_subsample must be positive or null')
        if not 0.0 < self.omega_min < self.omega_max:
            problems.append('dcrab.omega_min must be positive and below omega_max')
        return problems


@dataclass(frozen=True)
class TimeSearchConfig:
    """Annealing-time grid T_0 * factor^k capped at t_cap, refined by bisection."""

    t_initial: float = 1.0
    growth_factor: float = 1.5
    t_cap: float = 1000.0
    refine_tolerance: float = 0.1
    warm_start: bool = True

    def problems(self) -> List[str]:
        problems = []
        if not self.t_initial > 0:
            problems.append('search.t_initial must be positive')
        if not self.growth_factor > 1:
            problems.append('search.growth_factor must exceed 1')
        if not self.t_cap >= self.t_initial:
            problems.append('search.t_cap must be at least t_initial')
        if not 0 < self.refine_tolerance < 1:
            problems.append('search.refine_tolerance must lie in (0, 1)')
        return problems


@dataclass(frozen=True)
class SuperIteration:
    index: int
    frequencies: Tuple[float, ...]
    best_after: float
    improved: bool


@dataclass
class OptimizationRecord:
    """Outcome of one dCRAB run."""

    best_schedule: Schedule
    best_objective: float
    objective_history: List[Tuple[int, float]] = field(default_factory=list)
    superiteration_log: List[SuperIteration] = field(default_factory=list)
    wall_time: float = 0.0
    validated_objective: Optional[float] = None

    @property
    def evaluations(self) -> int:
        return len(self.objective_history)

    @property
    def final_objective(self) -> float:
        """Full-group value when validated, else the optimised objective."""
        return self.best_objective if self.validated_objective is None else self.validated_objective

    def running_best(self) -> List[float]:
        best = -math.inf
        trace = []
        for _, value in self.objective_history:
            best = max(best, value)
            trace.append(best)
        return trace

    def to_dict(self) -> Dict[str, Any]:
        return {
            'best_schedule': self.best_schedule.to_dict(),
            'best_objective': self.best_objective,
            'validated_objective': self.validated_objective,
            'objective_history': [[i, v] for i, v in self.objective_history],
            'superiterations': [
                {
                    'index': s.index,
                    'frequencies': list(s.frequencies),
                    'best_after': s.best_after,
                    'improved': s.improved,
                }
                for s in self.superiteration_log
            ],
            'evaluations': self.evaluations,
        }


class _TargetReached(Exception):
    """Raised inside the simplex objective to stop once the target is met."""


def _default_guess(group: Sequence[PhysicalInstance], t_anneal: float, coupling_mode: str) -> Schedule:
    c = group[0].constraint_strength if group else 2.0
    return linear_schedule(t_anneal, c=c, coupling_mode=coupling_mode)


def _subsample(group: Sequence[PhysicalInstance], cfg: DcrabConfig) -> List[PhysicalInstance]:
    if cfg.objective_subsample is None or cfg.objective_subsample >= len(group):
        return list(group)
    rng = np.random.default_rng([cfg.seed, 1])
    chosen = np.sort(rng.choice(len(group), size=cfg.objective_subsample, replace=False))
    return [group[int(i)] for i in chosen]


def dcrab_optimize(
    group: Sequence[PhysicalInstance],
    t_anneal: float,
    cfg: DcrabConfig = DcrabConfig(),
    guess: Optional[Schedule] = None,
    objective: Optional[Objective] = None,
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    coupling_mode: str = 'decoupled',
) -> OptimizationRecord:
    """
    Optimise a schedule for a group with dCRAB.

    Args:
        group: Physical instances sharing the protocol
        t_anneal: Annealing time T
        cfg: dCRAB hyperparameters
        guess: Starting schedule (rescaled to T); linear ramp by default
        objective: Replacement objective (schedule -> value), for tests
        settings: Integrator policy
        workers: Parallel evaluation processes
        coupling_mode: Constraint coupling of the default linear guess

    Returns:
        OptimizationRecord whose best schedule is never worse than the guess
    """
    if not group and objective is None:
        raise ValueError('dcrab_optimize needs a non-empty group')

    started = time.monotonic()
    base = guess.with_time(t_anneal) if guess is not None else _default_guess(group, t_anneal, coupling_mode)
    subgroup = _subsample(group, cfg)
    evaluate = objective or (lambda schedule: group_fidelity(schedule, subgroup, settings, workers))

    history: List[Tuple[int, float]] = []

    def score(schedule: Schedule) -> float:
        if cfg.enforce_monotone and not schedule.is_monotone():
            value = 0.0
        else:
            value = float(evaluate(schedule))
        history.append((len(history), value))
        return value

    best_schedule = base
    best_value = score(base)
    log: List[SuperIteration] = []
    rng = np.random.default_rng(cfg.seed)
    n_amplitudes = 2 * cfg.n_frequencies_per_super

    for index in range(cfg.n_superiterations):
        if best_value >= cfg.target_fidelity:
            break

        frequencies = tuple(float(w) for w in rng.uniform(cfg.omega_min, cfg.omega_max, cfg.n_frequencies_per_super))
        incumbent = {'value': best_value, 'schedule': None}
        parent = best_schedule

        def loss(x: np.ndarray) -> float:
            terms = [
                BasisTerm(omega=w, a=float(x[2 * n]), b=float(x[2 * n + 1]))
                for n, w in enumerate(frequencies)
            ]
            candidate = parent.dressed(terms)
            value = score(candidate)
            if value > incumbent['value']:
                incumbent['value'] = value
                incumbent['schedule'] = candidate
            if value >= cfg.target_fidelity:
                raise _TargetReached()
            return -value

        x0 = np.zeros(n_amplitudes)
        simplex = np.vstack([x0] + [x0 + cfg.simplex_initial_step * e for e in np.eye(n_amplitudes)])
        try:
            minimize(
                loss,
                x0,
                method='Nelder-Mead',
                options={
                    'maxfev': cfg.inner_max_evaluations,
                    'initial_simplex': simplex,
                    'xatol': cfg.simplex_xatol,
                    'fatol': cfg.simplex_fatol,
                },
            )
        except _TargetReached:
            pass

        improved = incumbent['schedule'] is not None
        if improved:
            best_schedule = incumbent['schedule']
            best_value = incumbent['value']
        else:
            logger.debug(f'Super-iteration {index}: no progress at T={t_anneal:g}')
        log.append(SuperIteration(index, frequencies, best_value, improved))
        logger.debug(f'Super-iteration {index}: best {best_value:.6f} after {len(history)} evaluations')

    validated = None
    if objective is None and len(subgroup) < len(group):
        validated = group_fidelity(best_schedule, group, settings, workers)
        logger.info(
            f'Subsample objective {best_value:.4f}, full-group validation {validated:.4f}'
        )

    record = OptimizationRecord(
        best_schedule=best_schedule,
        best_objective=best_value,
        objective_history=history,
        superiteration_log=log,
        wall_time=time.monotonic() - started,
        validated_objective=validated,
    )
    logger.info(
        f'dCRAB at T={t_anneal:g}: objective {record.final_objective:.4f} '
        f'({record.evaluations} evaluations, {format_duration(record.wall_time)})'
    )
    return record


def _search_time(
    attempt: Callable[[float], Tuple[bool, Any, float]],
    search: TimeSearchConfig,
    instance_ids: Sequence[str],
) -> Tuple[float, Any]:
    """
    Walk the time grid until attempt(T) passes, then bisect to the tolerance.

    attempt returns (passed, payload, value).
    """
    t_value = search.t_initial
    last_failing: Optional[float] = None
    best_value = -math.inf

    while True:
        passed, payload, value = attempt(t_value)
        best_value = max(best_value, value)
        if passed:
            break
        if t_value >= search.t_cap:
            raise HardnessError(search.t_cap, instance_ids, best_value)
        last_failing = t_value
        t_value = min(t_value * search.growth_factor, search.t_cap)

    passing, passing_payload = t_value, payload
    low = last_failing
    while low is not None and (passing - low) / passing > search.refine_tolerance:
        middle = 0.5 * (low + passing)
        passed, payload, _ = attempt(middle)
        if passed:
            passing, passing_payload = middle, payload
        else:
            low = middle

    return passing, passing_payload


def escalate_time(
    group: Sequence[PhysicalInstance],
    cfg: DcrabConfig = DcrabConfig(),
    search: TimeSearchConfig = TimeSearchConfig(),
    objective: Optional[Objective] = None,
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    coupling_mode: str = 'decoupled',
) -> Tuple[float, OptimizationRecord]:
    """
    Find the smallest annealing time at which dCRAB reaches the target.

    Each attempt warm-starts from the best schedule found so far, rescaled
    to the new T (cold-starts from the linear ramp when warm_start is off).

    Returns:
        Tuple of (t_final, record at t_final)

    Raises:
        HardnessError: If the target is not met at the time cap
    """
    if not group and objective is None:
        raise ValueError('escalate_time needs a non-empty group')

    state: Dict[str, Any] = {'guess': None, 'attempts': 0}

    def attempt(t_value: float) -> Tuple[bool, OptimizationRecord, float]:
        guess = state['guess'] if search.warm_start else None
        run_cfg = replace(cfg, seed=cfg.seed + state['attempts'])
        state['attempts'] += 1
        record = dcrab_optimize(
            group, t_value, run_cfg,
            guess=guess,
            objective=objective,
            settings=settings,
            workers=workers,
            coupling_mode=coupling_mode,
        )
        state['guess'] = record.best_schedule
        value = record.final_objective
        logger.info(f'T={t_value:.3f}: fidelity {value:.4f} (target {cfg.target_fidelity})')
        return value >= cfg.target_fidelity, record, value

    ids = [phys.instance_id for phys in group]
    t_final, record = _search_time(attempt, search, ids)
    logger.info(f'✅ Target reached at T={t_final:.3f}')
    return t_final, record


def linear_required_time(
    group: Sequence[PhysicalInstance],
    target: float,
    search: TimeSearchConfig = TimeSearchConfig(),
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    coupling_mode: str = 'decoupled',
) -> float:
    """
    Smallest T on the escalation grid (with the same bisection refinement)
    at which the linear ramp reaches the target group fidelity.

    Raises:
        HardnessError: If the cap is exceeded
    """
    if not group:
        raise ValueError('linear_required_time needs a non-empty group')
    c = group[0].constraint_strength

    def attempt(t_value: float) -> Tuple[bool, None, float]:
        value = group_fidelity(linear_schedule(t_value, c=c, coupling_mode=coupling_mode), group, settings, workers)
        logger.debug(f'Linear ramp at T={t_value:.3f}: fidelity {value:.4f}')
        return value >= target, None, value

    t_linear, _ = _search_time(attempt, search, [phys.instance_id for phys in group])
    return t_linear


@dataclass(frozen=True)
class GroupSpeedup:
    group: str
    linear_time: Optional[float]
    optimized_time: Optional[float]

    @property
    def absent(self) -> bool:
        return self.linear_time is None or self.optimized_time is None

    @property
    def factor(self) -> Optional[float]:
        return None if self.absent else self.linear_time / self.optimized_time

    @property
    def reduction(self) -> Optional[float]:
        return None if self.absent else 1.0 - self.optimized_time / self.linear_time


@dataclass(frozen=True)
class SpeedupReport:
    rows: Tuple[GroupSpeedup, ...]

    @property
    def present(self) -> List[GroupSpeedup]:
        return [row for row in self.rows if not row.absent]

    @property
    def average_factor(self) -> Optional[float]:
        present = self.present
        return math.fsum(r.factor for r in present) / len(present) if present else None

    @property
    def average_reduction(self) -> Optional[float]:
        present = self.present
        return math.fsum(r.reduction for r in present) / len(present) if present else None

    def csv_header(self) -> List[str]:
        return ['group', 'linear_T', 'optimized_T', 'speedup_factor', 'time_reduction', 'absent']

    def csv_rows(self) -> List[List[Any]]:
        rows: List[List[Any]] = [
            [r.group, r.linear_time, r.optimized_time, r.factor, r.reduction, int(r.absent)]
            for r in self.rows
        ]
        rows.append(['average', None, None, self.average_factor, self.average_reduction, 0])
        return rows


def speedup_report(
    groups: Sequence[str],
    optimized_times: Mapping[str, float],
    linear_times: Mapping[str, float],
) -> SpeedupReport:
    """
    Per-group speed-up linear_T / optimized_T and time reduction
    1 - optimized_T / linear_T, with unweighted averages.
    Groups missing either time are marked absent.
    """
    rows = []
    for label in groups:
        row = GroupSpeedup(label, linear_times.get(label), optimized_times.get(label))
        if row.absent:
            logger.warning(f'Group {label}: missing time, marked absent')
        rows.append(row)
    return SpeedupReport(tuple(rows))
