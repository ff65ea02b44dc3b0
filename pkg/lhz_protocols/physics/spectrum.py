"""
Exact diagonalization along the sweep.

Computes the lowest instantaneous levels of the passage Hamiltonian on a
uniform tau grid, summarises the ground-state gap, and evaluates the
adiabatic-condition bound max_tau |<m|dH/dtau|n>| / gap^2.

Levels are reported sorted per grid point, not adiabatically connected.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, sparse, stats
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from ..errors import DimensionLimitError, DomainError, SpectrumError
from ..logging_config import get_logger
from .hamiltonians import (
    INITIAL_FIELD_SIGN,
    PassageOperators,
    assemble_passage,
    passage_operators,
)
from .parity import PhysicalInstance
from .schedule import Schedule

logger = get_logger(__name__)

MAX_SPECTRUM_DIM = 2 ** 12
MIN_GRID_POINTS = 33
DENSE_SOLVER_MAX_DIM = 2 ** 10
GAP_FLOOR = 1e-12
LEVEL_DEGENERACY_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """
    Lowest L instantaneous eigenvalues on a tau grid.

    Attributes:
        tau_grid: M strictly increasing points, 0 and 1 included
        levels: M x L array, ascending per row
        vectors: Optional M x dim x L eigenvectors matching `levels`
    """

    tau_grid: np.ndarray
    levels: np.ndarray
    vectors: Optional[np.ndarray] = None

    def __post_init__(self):
        tau_grid = np.asarray(self.tau_grid, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if tau_grid.ndim != 1 or tau_grid.shape[0] < 3:
            raise ValueError('tau grid needs at least 3 points')
        if tau_grid[0] != 0.0 or tau_grid[-1] != 1.0 or np.any(np.diff(tau_grid) <= 0):
            raise ValueError('tau grid must increase strictly from 0 to 1')
        if levels.ndim != 2 or levels.shape[0] != tau_grid.shape[0] or levels.shape[1] < 2:
            raise ValueError('levels must be an M x L array with L >= 2')
        if np.any(np.diff(levels, axis=1) < 0):
            raise ValueError('levels must be sorted ascending per grid point')
        object.__setattr__(self, 'tau_grid', tau_grid)
        object.__setattr__(self, 'levels', levels)

    @property
    def n_levels(self) -> int:
        return self.levels.shape[1]

    @property
    def gap_trace(self) -> np.ndarray:
        return self.levels[:, 1] - self.levels[:, 0]

    def csv_header(self) -> List[str]:
        return ['tau'] + [f'level_{n}' for n in range(self.n_levels)]

    def csv_rows(self) -> List[List[float]]:
        return [
            [float(tau)] + [float(v) for v in row]
            for tau, row in zip(self.tau_grid, self.levels)
        ]


@dataclass(frozen=True)
class GapSummary:
    """Minimum gap, its position and the number of gap minima along the sweep."""

    min_gap: float
    position: float
    local_minima_count: int
    gap_trace: Tuple[float, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'min_gap': self.min_gap,
            'position': self.position,
            'local_minima_count': self.local_minima_count,
        }


def uniform_grid(m_points: int) -> np.ndarray:
    grid = np.linspace(0.0, 1.0, m_points)
    grid[0], grid[-1] = 0.0, 1.0
    return grid


def _transverse_levels(ops: PassageOperators, k_physical: int, l_levels: int) -> np.ndarray:
    # spectrum of scale * sign * sum sigma_x: scale * sign * (K - 2m), multiplicity binom(K, m)
    values: List[float] = []
    for m in range(k_physical + 1):
        value = ops.initial_scale * INITIAL_FIELD_SIGN * (k_physical - 2 * m)
        values.extend([value] * min(math.comb(k_physical, m), l_levels))
    return np.sort(np.array(values))[:l_levels]


def _lanczos(operator, k: int, v0: np.ndarray, tau: float, keep_vectors: bool):
    try:
        return eigsh(
            operator,
            k=k,
            which='SA',
            tol=1e-12,
            ncv=min(operator.shape[0] - 1, max(4 * k, 24)),
            v0=v0,
            return_eigenvectors=keep_vectors,
        )
    except ArpackNoConvergence as e:
        raise SpectrumError(tau, str(e)) from e


def _sparse_levels(
    hamiltonian: sparse.spmatrix,
    spectral_bound: float,
    l_levels: int,
    tau: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lowest levels by Lanczos, completed by deflation.

    Single-start Lanczos returns one vector per degenerate eigenspace, so
    found vectors are lifted by a shift above the spectrum and the lowest
    remaining level is searched again until nothing below the current top
    level is left.
    """
    dim = hamiltonian.shape[0]
    v0 = np.random.default_rng(12345).standard_normal(dim)
    values, vectors = _lanczos(hamiltonian, l_levels, v0, tau, keep_vectors=True)
    shift = 2.0 * spectral_bound + 1.0

    for _ in range(l_levels):
        found = vectors

        def deflated_matvec(x, found=found):
            x = np.asarray(x).reshape(-1)
            return hamiltonian @ x + shift * (found @ (found.conj().T @ x))

        deflated = LinearOperator((dim, dim), matvec=deflated_matvec, dtype=hamiltonian.dtype)
        extra_values, extra_vectors = _lanczos(deflated, 1, v0, tau, keep_vectors=True)
        order = np.argsort(values)
        if extra_values[0] >= values[order[l_levels - 1]] - LEVEL_DEGENERACY_TOLERANCE:
            break
        values = np.concatenate([values, extra_values])
        vectors = np.hstack([vectors, extra_vectors])

    order = np.argsort(values)[:l_levels]
    return values[order], vectors[:, order]


def _solve_point(
    phys: PhysicalInstance,
    ops: PassageOperators,
    s_value: float,
    c_value: float,
    tau: float,
    l_levels: int,
    keep_vectors: bool,
    solver: str,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if s_value == 1.0:
        diagonal = ops.problem.entries + c_value * ops.constraint.entries
        order = np.argsort(diagonal, kind='stable')[:l_levels]
        vectors = None
        if keep_vectors:
            vectors = np.zeros((ops.dim, l_levels))
            vectors[order, np.arange(l_levels)] = 1.0
        return diagonal[order], vectors

    if s_value == 0.0 and c_value == 0.0 and not keep_vectors:
        return _transverse_levels(ops, phys.k_physical, l_levels), None

    hamiltonian = assemble_passage(phys, s_value, c_value, operators=ops).matrix
    if solver == 'dense':
        result = linalg.eigh(
            hamiltonian.toarray(),
            subset_by_index=[0, l_levels - 1],
            eigvals_only=not keep_vectors,
        )
        if keep_vectors:
            return result[0], result[1]
        return result, None

    spectral_bound = ops.norm_bound + abs(c_value) * ops.n_constraints
    values, vectors = _sparse_levels(hamiltonian, spectral_bound, l_levels, tau)
    return values, (vectors if keep_vectors else None)


def instantaneous_spectrum(
    phys: PhysicalInstance,
    schedule: Schedule,
    m_points: int = 101,
    l_levels: int = 4,
    keep_vectors: bool = False,
    solver: str = 'auto',
    operators: Optional[PassageOperators] = None,
) -> SpectrumTrace:
    """
    Lowest instantaneous levels of H(tau) on a uniform grid.

    Args:
        phys: Physical instance
        schedule: Protocol supplying s(tau) and c(tau)
        m_points: Grid size (>= 33)
        l_levels: Number of tracked levels (>= 2)
        keep_vectors: Retain eigenvectors (needed by the adiabatic bound)
        solver: 'dense', 'sparse' or 'auto' (dense up to 1024 states)
        operators: Prebuilt operators (defaults to the memoised set)

    Returns:
        SpectrumTrace
    """
    if m_points < MIN_GRID_POINTS:
        raise DomainError(f'm_points must be at least {MIN_GRID_POINTS}, got {m_points}')
    if l_levels < 2:
        raise DomainError(f'l_levels must be at least 2, got {l_levels}')
    if phys.dim > MAX_SPECTRUM_DIM:
        raise DimensionLimitError(
            f'Dimension {phys.dim} exceeds the spectral scan limit {MAX_SPECTRUM_DIM}'
        )
    if solver not in ('auto', 'dense', 'sparse'):
        raise DomainError(f'Unknown eigensolver {solver!r}')

    ops = operators or passage_operators(phys)
    l_levels = min(l_levels, ops.dim)
    if solver == 'auto':
        solver = 'dense' if ops.dim <= DENSE_SOLVER_MAX_DIM else 'sparse'
    if l_levels >= ops.dim - 1:
        solver = 'dense'
    logger.debug(f'{phys.instance_id or "instance"}: {solver} eigensolver, dim {ops.dim}')
    grid = uniform_grid(m_points)
    levels = np.empty((m_points, l_levels))
    vectors = np.empty((m_points, ops.dim, l_levels)) if keep_vectors else None

    for m, tau in enumerate(grid):
        values, vecs = _solve_point(
            phys, ops,
            s_value=schedule.evaluate(float(tau)),
            c_value=schedule.constraint_ramp(float(tau)),
            tau=float(tau),
            l_levels=l_levels,
            keep_vectors=keep_vectors,
            solver=solver,
        )
        levels[m] = values
        if keep_vectors:
            vectors[m] = vecs

    logger.debug(
        f'{phys.instance_id or "instance"}: spectrum on {m_points} points, '
        f'min gap {float(np.min(levels[:, 1] - levels[:, 0])):.6f}'
    )
    return SpectrumTrace(tau_grid=grid, levels=levels, vectors=vectors)


def _compress_plateaus(values: Sequence[float], tolerance: float) -> List[float]:
    compressed: List[float] = []
    for value in values:
        if not compressed or abs(value - compressed[-1]) > tolerance:
            compressed.append(float(value))
    return compressed


def count_local_minima(gap_trace: Sequence[float], plateau_tolerance: float = 1e-10) -> int:
    """
    Strict interior local minima of the gap, plus the global minimum if it
    sits on the boundary. Plateaus within tolerance count once.
    """
    compressed = _compress_plateaus(gap_trace, plateau_tolerance)
    if len(compressed) == 1:
        return 1

    interior = sum(
        1
        for i in range(1, len(compressed) - 1)
        if compressed[i] < compressed[i - 1] and compressed[i] < compressed[i + 1]
    )
    lowest = min(compressed)
    at_boundary = (
        compressed[0] <= lowest + plateau_tolerance
        or compressed[-1] <= lowest + plateau_tolerance
    )
    return interior + (1 if at_boundary else 0)


def _refine_position(tau_grid: np.ndarray, gaps: np.ndarray, index: int) -> float:
    if index == 0 or index == len(gaps) - 1:
        return float(tau_grid[index])

    x0, x1, x2 = tau_grid[index - 1:index + 2]
    y0, y1, y2 = gaps[index - 1:index + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    curvature = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    if not curvature > 0:
        return float(x1)
    linear = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / denom
    vertex = -linear / (2.0 * curvature)
    return float(min(max(vertex, x0), x2))


def gap_summary(trace: SpectrumTrace, plateau_tolerance: float = 1e-10) -> GapSummary:
    """
    Summarise the ground-state gap of a trace.

    The global minimum is the leftmost grid point attaining it; its position
    is refined by a parabola through the neighbouring grid points.
    """
    gaps = trace.gap_trace
    index = int(np.argmin(gaps))
    return GapSummary(
        min_gap=float(gaps[index]),
        position=_refine_position(trace.tau_grid, gaps, index),
        local_minima_count=count_local_minima(gaps, plateau_tolerance),
        gap_trace=tuple(float(g) for g in gaps),
    )


def passage_derivative(
    phys: PhysicalInstance,
    schedule: Schedule,
    tau: float,
    operators: Optional[PassageOperators] = None,
) -> sparse.csr_matrix:
    """Analytic dH/dtau = (ds/dtau)(H_p - H_i) + (dc/dtau) H_c."""
    ops = operators or passage_operators(phys)
    ds = schedule.derivative(tau)
    dc = schedule.constraint_derivative(tau)
    diagonal = ds * ops.problem.entries + dc * ops.constraint.entries
    return (sparse.diags(diagonal, format='csr') - ds * ops.initial.matrix).tocsr()


def adiabatic_time_bound(
    phys: PhysicalInstance,
    schedule: Schedule,
    trace: SpectrumTrace,
    operators: Optional[PassageOperators] = None,
) -> float:
    """
    Adiabatic-condition estimator max_tau |<m|dH/dtau|n>| / gap(tau)^2.

    The matrix element is taken against the whole first-excited level among
    the retained eigenvectors. Returns math.inf when the gap closes.

    Args:
        phys: Physical instance
        schedule: Protocol the trace was computed with
        trace: Spectrum computed with keep_vectors=True
        operators: Operators the trace was computed with

    Returns:
        Bound in inverse-energy units (numerator energy / gap squared)
    """
    if trace.vectors is None:
        raise DomainError('Adiabatic bound needs a trace computed with keep_vectors=True')

    bound = 0.0
    for m, tau in enumerate(trace.tau_grid):
        row = trace.levels[m]
        gap = row[1] - row[0]
        if gap < GAP_FLOOR:
            return math.inf

        derivative = passage_derivative(phys, schedule, float(tau), operators)
        ground = trace.vectors[m, :, 0]
        pushed = derivative @ ground
        excited = [
            j for j in range(1, len(row))
            if abs(row[j] - row[1]) <= LEVEL_DEGENERACY_TOLERANCE
        ]
        overlaps = [np.vdot(trace.vectors[m, :, j], pushed) for j in excited]
        numerator = math.sqrt(sum(abs(o) ** 2 for o in overlaps))
        bound = max(bound, numerator / gap ** 2)

    return bound


def multi_minimum_ratio(summaries: Sequence[GapSummary]) -> float:
    """Fraction of instances whose gap has more than one local minimum."""
    if not summaries:
        return 0.0
    return sum(1 for s in summaries if s.local_minima_count > 1) / len(summaries)


def gap_position_correlation(summaries: Sequence[GapSummary]) -> float:
    """Spearman rank correlation between the minimum gap and 1 - position."""
    if len(summaries) < 3:
        return float('nan')
    gaps = [s.min_gap for s in summaries]
    earliness = [1.0 - s.position for s in summaries]
    rho, _ = stats.spearmanr(gaps, earliness)
    return float(rho)
