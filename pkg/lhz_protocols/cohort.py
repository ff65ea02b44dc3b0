"""
Instance cohorts: sampling, filtering, gap sorting and grouping.

Instances are sampled, diagonalised along a linear sweep, filtered for
degenerate or constraint-violating final ground states, sorted by minimum
gap and cut into contiguous groups whose gap spreads are balanced.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyTestGroupError, InfeasibleQuotaError, NumericalError
from .logging_config import get_logger
from .physics.hamiltonians import final_ground_space, passage_operators, satisfies_constraints
from .physics.parity import (
    DEFAULT_CONSTRAINT_STRENGTH,
    LogicalInstance,
    PhysicalInstance,
    map_logical_to_physical,
    n_pairs,
)
from .physics.schedule import linear_schedule
from .physics.spectrum import GapSummary, gap_summary, instantaneous_spectrum, uniform_grid
from .workers import ordered_map

logger = get_logger(__name__)

DISCARD_DEGENERATE = 'degenerate'
DISCARD_CONSTRAINT = 'constraint_violation'
DISCARD_HARD = 'hard'

BALANCE_METHODS = ('greedy', 'dp')
SIGMA_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CohortEntry:
    instance: LogicalInstance
    summary: GapSummary

    @property
    def instance_id(self) -> str:
        return self.instance.instance_id

    @property
    def min_gap(self) -> float:
        return self.summary.min_gap


@dataclass(frozen=True)
class Cohort:
    """
    Instances with their gap summaries.

    Attributes:
        entries: Retained instances
        filter_log: (instance id, discard reason) for every removed instance
        seed: Sampling seed
    """

    entries: Tuple[CohortEntry, ...]
    filter_log: Tuple[Tuple[str, str], ...] = ()
    seed: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> List[str]:
        return [e.instance_id for e in self.entries]

    @property
    def gaps(self) -> np.ndarray:
        return np.array([e.min_gap for e in self.entries], dtype=float)

    @property
    def summaries(self) -> List[GapSummary]:
        return [e.summary for e in self.entries]

    def is_sorted(self) -> bool:
        keys = [(e.min_gap, e.instance_id) for e in self.entries]
        return keys == sorted(keys)

    def subset(self, indices: Iterable[int]) -> 'Cohort':
        return Cohort(tuple(self.entries[i] for i in indices), self.filter_log, self.seed)

    def physical(self, indices: Iterable[int], c: float = DEFAULT_CONSTRAINT_STRENGTH) -> List[PhysicalInstance]:
        return [map_logical_to_physical(self.entries[i].instance, c) for i in indices]


def sample_instances(count: int, n_logical: int, seed: int) -> List[LogicalInstance]:
    """
    Draw spin-glass instances with couplings i.i.d. uniform on [-1, 1].

    Instance k uses an MT19937 generator seeded with SeedSequence([seed, k]),
    so each instance is reproducible on its own and independent of count.
    The recorded instance seed is the first 64-bit word of that sequence.
    """
    if count < 1:
        raise ValueError(f'count must be positive, got {count}')
    if seed < 0:
        raise ValueError(f'seed must be non-negative, got {seed}')

    instances = []
    for index in range(count):
        sequence = np.random.SeedSequence([seed, index])
        generator = np.random.Generator(np.random.MT19937(sequence))
        couplings = generator.uniform(-1.0, 1.0, n_pairs(n_logical))
        instances.append(LogicalInstance(
            n_logical=n_logical,
            couplings=tuple(float(c) for c in couplings),
            seed=int(sequence.generate_state(1, np.uint64)[0]),
            instance_id=f'n{n_logical}-s{seed}-{index:06d}',
        ))
    return instances


def _summarize(task: Tuple[LogicalInstance, float, str, int, int]) -> GapSummary:
    inst, c, coupling_mode, m_points, l_levels = task
    phys = map_logical_to_physical(inst, c)
    trace = instantaneous_spectrum(
        phys,
        linear_schedule(1.0, c=c, coupling_mode=coupling_mode),
        m_points=m_points,
        l_levels=l_levels,
    )
    return gap_summary(trace)


def compute_gap_summaries(
    instances: Sequence[LogicalInstance],
    c: float = DEFAULT_CONSTRAINT_STRENGTH,
    coupling_mode: str = 'decoupled',
    m_points: int = 101,
    l_levels: int = 4,
    workers: int = 1,
) -> List[GapSummary]:
    """Gap summaries along the linear sweep, in instance order."""
    tasks = [(inst, c, coupling_mode, m_points, l_levels) for inst in instances]
    summaries = ordered_map(_summarize, tasks, workers)
    logger.info(f'Computed {len(summaries)} spectra on {m_points}-point grids')
    return summaries


def build_cohort(
    instances: Sequence[LogicalInstance],
    summaries: Sequence[GapSummary],
    seed: int = 0,
) -> Cohort:
    if len(instances) != len(summaries):
        raise ValueError('Every instance needs exactly one gap summary')
    return Cohort(tuple(CohortEntry(i, s) for i, s in zip(instances, summaries)), (), seed)


@dataclass(frozen=True)
class FilterPolicy:
    """
    Discard rules.

    Attributes:
        degeneracy_tolerance: Energy window of the final ground space
        constraint_strength: C used to build the final Hamiltonian
        hard_ids: Instances flagged by the annealing-time cap
    """

    degeneracy_tolerance: float = 1e-9
    constraint_strength: float = DEFAULT_CONSTRAINT_STRENGTH
    hard_ids: frozenset = field(default_factory=frozenset)


def final_state_verdict(inst: LogicalInstance, policy: FilterPolicy = FilterPolicy()) -> Optional[str]:
    """Discard reason of the final ground state, or None if it is usable."""
    phys = map_logical_to_physical(inst, policy.constraint_strength)
    ops = passage_operators(phys)
    _, indices = final_ground_space(phys, policy.degeneracy_tolerance, ops)
    if len(indices) > 1:
        return DISCARD_DEGENERATE
    if not satisfies_constraints(phys, int(indices[0]), ops):
        return DISCARD_CONSTRAINT
    return None


def _verdict(task: Tuple[LogicalInstance, FilterPolicy]) -> Optional[str]:
    inst, policy = task
    if inst.instance_id in policy.hard_ids:
        return DISCARD_HARD
    return final_state_verdict(inst, policy)


def filter_instances(cohort: Cohort, policy: FilterPolicy = FilterPolicy(), workers: int = 1) -> Cohort:
    """Drop degenerate, constraint-violating and hard instances, logging each."""
    verdicts = ordered_map(_verdict, [(e.instance, policy) for e in cohort.entries], workers)
    kept = []
    log = list(cohort.filter_log)
    for entry, reason in zip(cohort.entries, verdicts):
        if reason is None:
            kept.append(entry)
        else:
            log.append((entry.instance_id, reason))
            logger.warning(f'Discarded {entry.instance_id}: {reason}')
    logger.info(f'Filter kept {len(kept)} of {len(cohort)} instances')
    return Cohort(tuple(kept), tuple(log), cohort.seed)


def sort_by_gap(cohort: Cohort) -> Cohort:
    """Ascending minimum gap; equal gaps ordered by instance id."""
    ordered = sorted(cohort.entries, key=lambda e: (e.min_gap, e.instance_id))
    return Cohort(tuple(ordered), cohort.filter_log, cohort.seed)


class _Moments:
    """O(1) population standard deviation of contiguous slices."""

    def __init__(self, values: np.ndarray):
        self.first = np.concatenate([[0.0], np.cumsum(values)])
        self.second = np.concatenate([[0.0], np.cumsum(values ** 2)])

    def sigma(self, start: int, stop: int) -> float:
        m = stop - start
        mean = (self.first[stop] - self.first[start]) / m
        variance = (self.second[stop] - self.second[start]) / m - mean ** 2
        return math.sqrt(max(variance, 0.0))

    def sigmas(self, starts: np.ndarray, stop: int) -> np.ndarray:
        m = stop - starts
        mean = (self.first[stop] - self.first[starts]) / m
        variance = (self.second[stop] - self.second[starts]) / m - mean ** 2
        return np.sqrt(np.maximum(variance, 0.0))


def _spreads(moments: _Moments, bounds: Sequence[int]) -> List[float]:
    return [moments.sigma(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def _lexicographically_smaller(candidate: Sequence[float], current: Sequence[float]) -> bool:
    for a, b in zip(sorted(candidate, reverse=True), sorted(current, reverse=True)):
        if abs(a - b) > SIGMA_TOLERANCE:
            return a < b
    return False


def _equal_bounds(size: int, n_groups: int) -> List[int]:
    return [i * size // n_groups for i in range(n_groups + 1)]


def _balance_greedy(moments: _Moments, bounds: List[int], min_size: int) -> Tuple[List[int], int]:
    """
    Shift single instances across neighbouring boundaries until no shift
    lowers the descending-sorted spread vector. Every accepted shift leaves
    the largest spread no higher than before.
    """
    spreads = _spreads(moments, bounds)
    iterations = 0
    limit = 100 * bounds[-1]

    while iterations < limit:
        best: Optional[Tuple[List[int], List[float]]] = None
        for b in range(1, len(bounds) - 1):
            for step in (-1, 1):
                moved = bounds[b] + step
                if moved - bounds[b - 1] < min_size or bounds[b + 1] - moved < min_size:
                    continue
                candidate = bounds[:b] + [moved] + bounds[b + 1:]
                trial = list(spreads)
                trial[b - 1] = moments.sigma(candidate[b - 1], candidate[b])
                trial[b] = moments.sigma(candidate[b], candidate[b + 1])
                reference = spreads if best is None else best[1]
                if _lexicographically_smaller(trial, reference):
                    best = (candidate, trial)
        if best is None:
            break
        bounds, spreads = best
        iterations += 1

    return bounds, iterations


def _balance_dp(moments: _Moments, size: int, n_groups: int, min_size: int) -> List[int]:
    """Contiguous partition minimising the largest spread, groups >= min_size."""
    cost = np.full((n_groups + 1, size + 1), np.inf)
    choice = np.zeros((n_groups + 1, size + 1), dtype=np.int64)
    cost[0, 0] = 0.0

    for g in range(1, n_groups + 1):
        for stop in range(g * min_size, size - (n_groups - g) * min_size + 1):
            starts = np.arange((g - 1) * min_size, stop - min_size + 1)
            values = np.maximum(cost[g - 1, starts], moments.sigmas(starts, stop))
            best = int(np.argmin(values))
            cost[g, stop] = values[best]
            choice[g, stop] = starts[best]

    bounds = [size]
    for g in range(n_groups, 0, -1):
        bounds.append(int(choice[g, bounds[-1]]))
    return bounds[::-1]


def stride_indices(size: int, quota: int) -> List[int]:
    """quota positions spread uniformly over 0..size-1, endpoints included."""
    if quota >= size:
        return list(range(size))
    return [int(i) for i in np.floor(np.linspace(0, size - 1, quota) + 0.5)]


@dataclass(frozen=True)
class Grouping:
    """
    Contiguous gap groups over a sorted cohort.

    Attributes:
        bounds: [start, stop) of each group over the sorted cohort
        members: Cohort indices kept after trimming to the quota
        sigmas: Population spread of each balanced group before trimming
        trimmed_sigmas: Spread of each group after trimming
        intervals: (min gap, max gap) of each balanced group
        quota: Instances kept per group
        baseline_sigmas: Spreads of the equal-count split
        iterations: Accepted boundary shifts (greedy method)
        method: 'greedy' or 'dp'
    """

    bounds: Tuple[Tuple[int, int], ...]
    members: Tuple[Tuple[int, ...], ...]
    sigmas: Tuple[float, ...]
    trimmed_sigmas: Tuple[float, ...]
    intervals: Tuple[Tuple[float, float], ...]
    quota: int
    baseline_sigmas: Tuple[float, ...]
    iterations: int = 0
    method: str = 'greedy'

    @property
    def n_groups(self) -> int:
        return len(self.bounds)

    @property
    def labels(self) -> List[str]:
        return [f'g{i + 1}' for i in range(self.n_groups)]

    def group_of(self, index: int) -> Optional[int]:
        """Group of a cohort index, or None if trimmed away."""
        for g, members in enumerate(self.members):
            if index in members:
                return g
        return None

    def assign(self, gap: float) -> Optional[int]:
        """
        Group whose closed gap interval [min_i, max_i] holds a new instance.

        Gaps outside every training interval, including those falling
        between two neighbouring groups, get None.
        """
        for g, (low, high) in enumerate(self.intervals):
            if low <= gap <= high:
                return g
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'quota': self.quota,
            'iterations': self.iterations,
            'groups': [
                {
                    'label': label,
                    'start': start,
                    'stop': stop,
                    'gap_min': low,
                    'gap_max': high,
                    'sigma': sigma,
                    'trimmed_sigma': trimmed,
                    'members': list(members),
                }
                for label, (start, stop), (low, high), sigma, trimmed, members in zip(
                    self.labels, self.bounds, self.intervals,
                    self.sigmas, self.trimmed_sigmas, self.members,
                )
            ],
            'baseline_sigmas': list(self.baseline_sigmas),
        }


def balance_groups(cohort: Cohort, n_groups: int, quota: int, method: str = 'greedy') -> Grouping:
    """
    Partition a gap-sorted cohort into contiguous, spread-balanced groups.

    Starts from the equal-count split, balances by boundary shifts (or by
    the optimal contiguous partition when method='dp'), then thins every
    group to the quota with a uniform stride over its sorted members.

    Raises:
        InfeasibleQuotaError: If a group of the equal split is below quota
    """
    if method not in BALANCE_METHODS:
        raise ValueError(f'Unknown balancing method {method!r}')
    if n_groups < 1 or quota < 1:
        raise ValueError('n_groups and quota must be positive')
    if not cohort.is_sorted():
        raise ValueError('balance_groups needs a cohort sorted by gap')

    size = len(cohort)
    initial = _equal_bounds(size, n_groups)
    for g in range(n_groups):
        if initial[g + 1] - initial[g] < quota:
            raise InfeasibleQuotaError(g, initial[g + 1] - initial[g], quota)

    gaps = cohort.gaps
    moments = _Moments(gaps)
    baseline = _spreads(moments, initial)

    if method == 'dp':
        bounds, iterations = _balance_dp(moments, size, n_groups, quota), 0
    else:
        bounds, iterations = _balance_greedy(moments, initial, quota)

    sigmas = _spreads(moments, bounds)
    if max(sigmas) > max(baseline) + SIGMA_TOLERANCE:
        raise NumericalError(
            f'Balancing raised the largest spread from {max(baseline):.6g} to {max(sigmas):.6g}'
        )

    members = []
    trimmed = []
    for g in range(n_groups):
        start, stop = bounds[g], bounds[g + 1]
        kept = tuple(start + i for i in stride_indices(stop - start, quota))
        members.append(kept)
        trimmed.append(float(np.std(gaps[list(kept)])))

    logger.info(
        f'Balanced {n_groups} groups ({method}, {iterations} shifts): '
        f'max sigma {max(baseline):.4g} -> {max(sigmas):.4g}'
    )
    return Grouping(
        bounds=tuple((bounds[g], bounds[g + 1]) for g in range(n_groups)),
        members=tuple(members),
        sigmas=tuple(sigmas),
        trimmed_sigmas=tuple(trimmed),
        intervals=tuple((float(gaps[bounds[g]]), float(gaps[bounds[g + 1] - 1])) for g in range(n_groups)),
        quota=quota,
        baseline_sigmas=tuple(baseline),
        iterations=iterations,
        method=method,
    )


@dataclass(frozen=True)
class TrainTestSplit:
    """
    Disjoint training and test cohorts.

    The test cohort is sorted by gap; test_members holds, per training
    group, the test indices assigned to its gap range.
    """

    train: Cohort
    test: Cohort
    grouping: Grouping
    test_members: Tuple[Tuple[int, ...], ...]


def split_train_test(
    cohort: Cohort,
    n_groups: int,
    quota: int,
    test_quota: int,
    seed: int,
    train_fraction: float = 0.5,
    method: str = 'greedy',
) -> TrainTestSplit:
    """
    Randomly split a filtered cohort, group the training part and assign the
    test part to the training groups' gap ranges.

    Test instances outside every training gap interval are dropped; each test
    group is thinned to test_quota with the same stride rule.

    Raises:
        EmptyTestGroupError: If some training range receives no test instance
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError('train_fraction must lie in (0, 1)')
    order = np.random.default_rng([seed, 2]).permutation(len(cohort))
    n_train = int(round(train_fraction * len(cohort)))

    train = sort_by_gap(cohort.subset(int(i) for i in order[:n_train]))
    test = sort_by_gap(cohort.subset(int(i) for i in order[n_train:]))
    grouping = balance_groups(train, n_groups, quota, method)

    assigned: List[List[int]] = [[] for _ in range(n_groups)]
    outside = 0
    for index, gap in enumerate(test.gaps):
        g = grouping.assign(float(gap))
        if g is None:
            outside += 1
        else:
            assigned[g].append(index)
    if outside:
        logger.info(f'{outside} test instances fall outside the training gap intervals')

    test_members = []
    for g, indices in enumerate(assigned):
        if not indices:
            raise EmptyTestGroupError(g)
        if len(indices) < test_quota:
            logger.warning(f'Test group {g} holds {len(indices)} instances, below quota {test_quota}')
        test_members.append(tuple(indices[i] for i in stride_indices(len(indices), test_quota)))

    return TrainTestSplit(train, test, grouping, tuple(test_members))


@dataclass(frozen=True)
class GapHistogram:
    edges: Tuple[float, ...]
    counts: Tuple[int, ...]
    intervals: Tuple[Tuple[float, float], ...]

    def csv_header(self) -> List[str]:
        return ['bin_low', 'bin_high', 'count', 'groups']

    def csv_rows(self) -> List[List[Any]]:
        rows = []
        for n, count in enumerate(self.counts):
            low, high = self.edges[n], self.edges[n + 1]
            overlapping = [
                f'g{g + 1}' for g, (a, b) in enumerate(self.intervals)
                if a <= high and b >= low
            ]
            rows.append([low, high, count, ';'.join(overlapping)])
        return rows


def gap_histogram(cohort: Cohort, grouping: Optional[Grouping] = None, bins: int = 50) -> GapHistogram:
    """Binned minimum gaps over exactly [min gap, max gap], with group bands."""
    gaps = cohort.gaps
    if gaps.size == 0:
        raise ValueError('gap_histogram needs a non-empty cohort')
    intervals = grouping.intervals if grouping is not None else ()
    low, high = float(gaps.min()), float(gaps.max())
    if low == high:
        return GapHistogram((low, high), (int(gaps.size),), intervals)
    counts, edges = np.histogram(gaps, bins=bins, range=(low, high))
    return GapHistogram(
        tuple(float(e) for e in edges),
        tuple(int(c) for c in counts),
        intervals,
    )


def group_mean_gap_traces(cohort: Cohort, grouping: Grouping) -> Tuple[np.ndarray, np.ndarray]:
    """
    Average gap trace of each group's kept members.

    Returns:
        Tuple of (tau grid, n_groups x M array)
    """
    traces = []
    for members in grouping.members:
        stacked = np.array([cohort.entries[i].summary.gap_trace for i in members], dtype=float)
        traces.append(stacked.mean(axis=0))
    traces = np.array(traces)
    return uniform_grid(traces.shape[1]), traces


def manifest_records(split: TrainTestSplit) -> List[Dict[str, Any]]:
    """One record per sampled instance: retained train/test members and discards."""
    records = []

    def record(entry: CohortEntry, group: Optional[int], split_name: Optional[str]) -> Dict[str, Any]:
        payload = entry.instance.to_dict()
        payload.update(entry.summary.to_dict())
        payload['group'] = None if group is None else f'g{group + 1}'
        payload['split'] = split_name
        return payload

    for index, entry in enumerate(split.train.entries):
        records.append(record(entry, split.grouping.group_of(index), 'train'))

    test_groups = {i: g for g, members in enumerate(split.test_members) for i in members}
    for index, entry in enumerate(split.test.entries):
        records.append(record(entry, test_groups.get(index), 'test'))

    for instance_id, reason in split.train.filter_log:
        records.append({'id': instance_id, 'split': None, 'group': None, 'discard_reason': reason})
    return records
