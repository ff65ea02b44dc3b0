"""
Hamiltonian construction for the LHZ passage.

H(tau) = (1 - s) H_i + s H_p + c H_c with
- H_i = -sum_k sigma_x^(k)           (sparse, off-diagonal)
- H_p = sum_k J_k sigma_z^(k)        (diagonal)
- H_c = -sum_p prod_{q in p} sigma_z^(q)  (diagonal)

The initial field carries a minus sign so the initial ground state is the
all-plus uniform superposition; see INITIAL_FIELD_SIGN.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from ..errors import DomainError
from .parity import PhysicalInstance

INITIAL_FIELD_SIGN = -1.0


@lru_cache(maxsize=16)
def z_eigenvalues(k_physical: int) -> np.ndarray:
    """
    Table of sigma_z eigenvalues, shape (2^K, K).

    Entry [b, k] is +1 if bit k of b is 0, else -1. Read-only.
    """
    indices = np.arange(2 ** k_physical, dtype=np.int64)
    bits = (indices[:, None] >> np.arange(k_physical, dtype=np.int64)) & 1
    table = (1 - 2 * bits).astype(np.int8)
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class DiagonalOperator:
    """Operator diagonal in the computational z-basis."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 1:
            raise ValueError('Diagonal entries must be one-dimensional')
        dim = entries.shape[0]
        if dim < 1 or dim & (dim - 1):
            raise ValueError(f'Dimension {dim} is not a power of two')
        if not np.all(np.isfinite(entries)):
            raise ValueError('Diagonal entries must be finite')
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_sparse(self) -> sparse.csr_matrix:
        return sparse.diags(self.entries, format='csr')


@dataclass(frozen=True, eq=False)
class SparseHermitianOperator:
    """Hermitian operator stored as a CSR matrix."""

    matrix: sparse.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, 'matrix', sparse.csr_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.count_nonzero()

    def entries(self) -> List[Tuple[int, int, complex]]:
        """Nonzero entries as (row, col, value) triples."""
        coo = self.matrix.tocoo()
        return [
            (int(r), int(c), complex(v))
            for r, c, v in zip(coo.row, coo.col, coo.data)
            if v != 0
        ]

    def is_hermitian(self, tolerance: float = 1e-12) -> bool:
        difference = self.matrix - self.matrix.conj().T
        if difference.nnz == 0:
            return True
        return float(abs(difference).max()) <= tolerance

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dot(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector


def build_problem_hamiltonian(phys: PhysicalInstance) -> DiagonalOperator:
    """
    Local-field problem Hamiltonian sum_k J_k z_k.

    Args:
        phys: Physical instance

    Returns:
        Diagonal operator of dimension 2^K
    """
    z = z_eigenvalues(phys.k_physical)
    return DiagonalOperator(z @ np.asarray(phys.fields, dtype=float))


def build_constraint_hamiltonian(phys: PhysicalInstance) -> DiagonalOperator:
    """
    Plaquette penalty -sum_p prod_{q in p} z_q.

    Constraint-satisfying states sit at -N_c; each violated plaquette
    raises the entry by 2.
    """
    z = z_eigenvalues(phys.k_physical)
    entries = np.zeros(phys.dim)
    for plaquette in phys.plaquettes:
        entries -= np.prod(z[:, list(plaquette.members)], axis=1, dtype=np.int64)
    return DiagonalOperator(entries)


def build_initial_hamiltonian(k_physical: int) -> SparseHermitianOperator:
    """
    Transverse-field driver INITIAL_FIELD_SIGN * sum_k sigma_x^(k).

    Built from single-bit flips, giving exactly 2^K * K nonzero entries.
    """
    if k_physical < 1:
        raise DomainError(f'K must be positive, got {k_physical}')
    dim = 2 ** k_physical
    rows = np.repeat(np.arange(dim, dtype=np.int64), k_physical)
    flips = np.tile(np.left_shift(1, np.arange(k_physical, dtype=np.int64)), dim)
    cols = rows ^ flips
    data = np.full(rows.shape, INITIAL_FIELD_SIGN)
    return SparseHermitianOperator(sparse.csr_matrix((data, (rows, cols)), shape=(dim, dim)))


@dataclass(frozen=True, eq=False)
class PassageOperators:
    """The three building blocks of the passage Hamiltonian for one instance."""

    initial: SparseHermitianOperator
    problem: DiagonalOperator
    constraint: DiagonalOperator
    n_constraints: int
    constraint_strength: float
    norm_bound: float
    initial_scale: float = 1.0

    @property
    def dim(self) -> int:
        return self.problem.dim

    def final_diagonal(self) -> np.ndarray:
        """Diagonal of H_p + C H_c, the Hamiltonian at tau = 1."""
        return self.problem.entries + self.constraint_strength * self.constraint.entries

    def scaled(self, factor: float) -> 'PassageOperators':
        """Copy with every term multiplied by a positive factor."""
        return PassageOperators(
            initial=SparseHermitianOperator(factor * self.initial.matrix),
            problem=DiagonalOperator(factor * self.problem.entries),
            constraint=DiagonalOperator(factor * self.constraint.entries),
            n_constraints=self.n_constraints,
            constraint_strength=self.constraint_strength,
            norm_bound=factor * self.norm_bound,
            initial_scale=factor * self.initial_scale,
        )


@lru_cache(maxsize=256)
def passage_operators(phys: PhysicalInstance) -> PassageOperators:
    """
    Build (and memoise) the operators of a physical instance.

    The norm bound is the triangle-inequality estimate
    K + sum|J_k| + C * N_c.
    """
    norm_bound = (
        phys.k_physical
        + float(np.sum(np.abs(phys.fields)))
        + phys.constraint_strength * phys.n_constraints
    )
    return PassageOperators(
        initial=build_initial_hamiltonian(phys.k_physical),
        problem=build_problem_hamiltonian(phys),
        constraint=build_constraint_hamiltonian(phys),
        n_constraints=phys.n_constraints,
        constraint_strength=phys.constraint_strength,
        norm_bound=norm_bound,
    )


def assemble_passage(
    phys: PhysicalInstance,
    s_value: float,
    c_value: float,
    operators: Optional[PassageOperators] = None,
) -> SparseHermitianOperator:
    """
    Assemble (1 - s) H_i + s H_p + c H_c.

    The constraint weight c is independent of s; the nested form is
    obtained by the schedule passing c = s * C.

    Args:
        phys: Physical instance
        s_value: Mixing parameter in [0, 1]
        c_value: Constraint weight (>= 0)
        operators: Prebuilt operators (defaults to the memoised set)

    Returns:
        Hermitian passage Hamiltonian
    """
    if not 0.0 <= s_value <= 1.0:
        raise DomainError(f's={s_value} outside [0, 1]')
    if c_value < 0:
        raise DomainError(f'Constraint weight must be non-negative, got {c_value}')
    ops = operators or passage_operators(phys)
    diagonal = s_value * ops.problem.entries + c_value * ops.constraint.entries
    matrix = (1.0 - s_value) * ops.initial.matrix + sparse.diags(diagonal, format='csr')
    return SparseHermitianOperator(matrix.tocsr())


def final_ground_space(
    phys: PhysicalInstance,
    tolerance: float = 1e-9,
    operators: Optional[PassageOperators] = None,
) -> Tuple[float, np.ndarray]:
    """
    Ground energy and ground-space basis indices of H_p + C H_c.

    Returns:
        Tuple of (ground energy, sorted basis indices within tolerance)
    """
    ops = operators or passage_operators(phys)
    diagonal = ops.final_diagonal()
    energy = float(diagonal.min())
    return energy, np.nonzero(diagonal <= energy + tolerance)[0]


def satisfies_constraints(
    phys: PhysicalInstance,
    index: int,
    operators: Optional[PassageOperators] = None,
) -> bool:
    """True if basis state `index` satisfies every plaquette."""
    ops = operators or passage_operators(phys)
    return bool(ops.constraint.entries[index] <= -ops.n_constraints + 0.5)
