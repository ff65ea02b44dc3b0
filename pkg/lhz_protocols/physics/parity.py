"""
Logical spin-glass instances and the LHZ parity mapping.

Conventions used throughout the package:
- logical spins are indexed 0..N-1; the pair (i, j) with i < j, taken in
  row-major order (0,1), (0,2), ..., (0,N-1), (1,2), ..., is physical qubit k
- physical qubit k is bit k of a computational basis index (bit 0 is the
  least significant); bit value 0 means z = +1, bit value 1 means z = -1
"""

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, EnumerationLimitError, InvalidInstanceError

DEFAULT_CONSTRAINT_STRENGTH = 2.0
BRUTEFORCE_MAX_SPINS = 20


@lru_cache(maxsize=None)
def pair_order(n_logical: int) -> Tuple[Tuple[int, int], ...]:
    """Canonical row-major list of logical pairs (i, j), i < j."""
    return tuple(combinations(range(n_logical), 2))


@lru_cache(maxsize=None)
def pair_lookup(n_logical: int) -> Dict[Tuple[int, int], int]:
    """Map logical pair (i, j) to its physical qubit index k."""
    return {pair: k for k, pair in enumerate(pair_order(n_logical))}


def n_pairs(n_logical: int) -> int:
    return n_logical * (n_logical - 1) // 2


@dataclass(frozen=True)
class LogicalInstance:
    """
    Fully connected Ising spin glass with N logical spins.

    Couplings are stored as a tuple in canonical pair order, so instances
    are hashable and immutable.
    """

    n_logical: int
    couplings: Tuple[float, ...]
    seed: int = 0
    instance_id: str = ''

    def __post_init__(self):
        if self.n_logical < 1:
            raise InvalidInstanceError(f'n_logical must be positive, got {self.n_logical}')
        couplings = tuple(float(c) for c in self.couplings)
        expected = n_pairs(self.n_logical)
        if len(couplings) != expected:
            raise InvalidInstanceError(
                f'{self.instance_id or "instance"}: expected {expected} couplings, '
                f'got {len(couplings)}'
            )
        if not all(np.isfinite(c) and abs(c) <= 1.0 for c in couplings):
            raise InvalidInstanceError(
                f'{self.instance_id or "instance"}: couplings must be finite with |J| <= 1'
            )
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidInstanceError(f'seed {self.seed} is not a 64-bit unsigned integer')
        object.__setattr__(self, 'couplings', couplings)
        object.__setattr__(self, 'seed', int(self.seed))

    def coupling(self, i: int, j: int) -> float:
        """J_{i,j} for i != j (symmetric)."""
        if i == j:
            raise KeyError(f'No diagonal coupling ({i}, {j})')
        key = (i, j) if i < j else (j, i)
        return self.couplings[pair_lookup(self.n_logical)[key]]

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric N x N coupling matrix with zero diagonal."""
        matrix = np.zeros((self.n_logical, self.n_logical))
        for (i, j), value in zip(pair_order(self.n_logical), self.couplings):
            matrix[i, j] = value
            matrix[j, i] = value
        return matrix

    def energy(self, logical_config: Sequence[int]) -> float:
        """Ising energy sum_{i<j} J_ij s_i s_j of a logical configuration."""
        return float(np.dot(self.couplings, encode_configuration(logical_config)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'id': self.instance_id,
            'n_logical': self.n_logical,
            'seed': self.seed,
            'couplings': [
                [i, j, value]
                for (i, j), value in zip(pair_order(self.n_logical), self.couplings)
            ],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'LogicalInstance':
        """
        Build an instance from its JSON form.

        Coupling triples may come in any order but must cover every pair once.
        """
        try:
            n_logical = int(payload['n_logical'])
            triples = payload['couplings']
            instance_id = str(payload.get('id', ''))
            seed = int(payload.get('seed', 0))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInstanceError(f'Malformed instance record: {e}') from e

        lookup = pair_lookup(n_logical)
        values: List[Optional[float]] = [None] * len(lookup)
        for triple in triples:
            i, j, value = int(triple[0]), int(triple[1]), float(triple[2])
            if not i < j or (i, j) not in lookup:
                raise InvalidInstanceError(
                    f'{instance_id}: coupling ({i}, {j}) is not a canonical pair'
                )
            k = lookup[(i, j)]
            if values[k] is not None:
                raise InvalidInstanceError(f'{instance_id}: duplicate coupling ({i}, {j})')
            values[k] = value
        if any(v is None for v in values):
            raise InvalidInstanceError(f'{instance_id}: missing couplings')

        return cls(n_logical=n_logical, couplings=tuple(values), seed=seed, instance_id=instance_id)


@dataclass(frozen=True)
class Plaquette:
    """Three- or four-body parity constraint over physical qubits."""

    members: Tuple[int, ...]
    pairs: Tuple[Tuple[int, int], ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.members) not in (3, 4):
            raise InvalidInstanceError(
                f'Plaquette needs 3 or 4 members, got {len(self.members)}'
            )

    @property
    def body(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class PhysicalInstance:
    """
    LHZ-encoded instance: K local fields plus the plaquette constraints.

    Always derived from a LogicalInstance, never stored.
    """

    n_logical: int
    fields: Tuple[float, ...]
    plaquettes: Tuple[Plaquette, ...]
    pair_index: Tuple[Tuple[int, int], ...]
    constraint_strength: float = DEFAULT_CONSTRAINT_STRENGTH
    instance_id: str = ''

    @property
    def k_physical(self) -> int:
        return len(self.fields)

    @property
    def n_constraints(self) -> int:
        return len(self.plaquettes)

    @property
    def dim(self) -> int:
        return 2 ** self.k_physical


def enumerate_plaquettes(n_logical: int) -> List[Plaquette]:
    """
    Enumerate the N_c = K - N + 1 plaquettes of the LHZ layout.

    Three-body plaquettes {(i,i+1), (i,i+2), (i+1,i+2)} close the boundary,
    four-body plaquettes {(i,j), (i,j+1), (i+1,j), (i+1,j+1)} fill the bulk.
    Every logical index appears an even number of times across each
    plaquette's pairs, so the parity product is +1 for any logical state.

    Args:
        n_logical: Number of logical spins N (>= 3)

    Returns:
        List of plaquettes, three-body first
    """
    if n_logical < 3:
        raise InvalidInstanceError(
            f'N={n_logical}: at least 3 logical spins are needed for a closed parity loop'
        )
    lookup = pair_lookup(n_logical)
    plaquettes = []

    for i in range(n_logical - 2):
        pairs = ((i, i + 1), (i, i + 2), (i + 1, i + 2))
        plaquettes.append(Plaquette(tuple(lookup[p] for p in pairs), pairs))

    for i in range(n_logical - 3):
        for j in range(i + 2, n_logical - 1):
            pairs = ((i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1))
            plaquettes.append(Plaquette(tuple(lookup[p] for p in pairs), pairs))

    return plaquettes


def map_logical_to_physical(
    inst: LogicalInstance,
    c: float = DEFAULT_CONSTRAINT_STRENGTH,
) -> PhysicalInstance:
    """
    Map a logical instance onto the LHZ physical layout.

    Physical qubit k carries the parity of logical pair k in row-major
    order and inherits its local field J_k = J_{i,j}.

    Args:
        inst: Logical instance with N >= 3
        c: Uniform constraint strength C (> 0)

    Returns:
        Physical instance
    """
    if inst.n_logical < 3:
        raise InvalidInstanceError(
            f'{inst.instance_id or "instance"}: N={inst.n_logical} has no closed parity loop'
        )
    if not c > 0:
        raise DomainError(f'Constraint strength must be positive, got {c}')

    return PhysicalInstance(
        n_logical=inst.n_logical,
        fields=inst.couplings,
        plaquettes=tuple(enumerate_plaquettes(inst.n_logical)),
        pair_index=pair_order(inst.n_logical),
        constraint_strength=float(c),
        instance_id=inst.instance_id,
    )


def _as_spins(config: Sequence[int]) -> np.ndarray:
    spins = np.asarray(config, dtype=np.int64)
    if spins.ndim != 1 or not np.all(np.abs(spins) == 1):
        raise DomainError('Spin configurations must be 1-D arrays of +1/-1')
    return spins


def encode_configuration(logical_config: Sequence[int]) -> np.ndarray:
    """
    Encode logical spins into physical parities s_i * s_j (canonical order).

    A global spin flip of the logical state yields the same physical state.
    """
    spins = _as_spins(logical_config)
    pairs = np.array(pair_order(len(spins)), dtype=np.int64).reshape(-1, 2)
    return (spins[pairs[:, 0]] * spins[pairs[:, 1]]).astype(np.int8)


def decode_configuration(physical_config: Sequence[int], n_logical: int) -> Optional[np.ndarray]:
    """
    Invert the parity mapping up to global spin flip.

    Fixes logical spin 0 to +1 and reads s_j from the (0, j) qubit.

    Returns:
        Logical configuration, or None if the physical state violates a constraint
    """
    physical = _as_spins(physical_config)
    if len(physical) != n_pairs(n_logical):
        raise DomainError(
            f'Expected {n_pairs(n_logical)} physical spins for N={n_logical}, got {len(physical)}'
        )
    lookup = pair_lookup(n_logical)
    logical = np.ones(n_logical, dtype=np.int8)
    for j in range(1, n_logical):
        logical[j] = physical[lookup[(0, j)]]

    if not np.array_equal(encode_configuration(logical), physical.astype(np.int8)):
        return None
    return logical


def basis_index(physical_config: Sequence[int]) -> int:
    """Computational basis index of a physical +1/-1 configuration."""
    spins = _as_spins(physical_config)
    bits = (1 - spins) // 2
    return int(sum(int(b) << k for k, b in enumerate(bits)))


def basis_configuration(index: int, k_physical: int) -> np.ndarray:
    """Physical +1/-1 configuration of a computational basis index."""
    bits = (index >> np.arange(k_physical)) & 1
    return (1 - 2 * bits).astype(np.int8)


def logical_ground_bruteforce(
    inst: LogicalInstance,
    max_spins: int = BRUTEFORCE_MAX_SPINS,
    tolerance: float = 1e-10,
    chunk_size: int = 1 << 16,
) -> Tuple[float, List[np.ndarray]]:
    """
    Exhaustively minimise the logical Ising energy.

    Args:
        inst: Logical instance
        max_spins: Enumeration bound
        tolerance: Energies within this of the minimum count as minimizers
        chunk_size: Configurations evaluated per vectorised batch

    Returns:
        Tuple of (ground energy, all minimizing configurations); the set is
        closed under global spin flip
    """
    n = inst.n_logical
    if n > max_spins:
        raise EnumerationLimitError(
            f'Brute force over 2^{n} configurations refused (limit N={max_spins})'
        )

    couplings = np.asarray(inst.couplings)
    pairs = np.array(pair_order(n), dtype=np.int64).reshape(-1, 2)
    shifts = np.arange(n, dtype=np.int64)

    best = np.inf
    minimizers: List[np.ndarray] = []
    for start in range(0, 2 ** n, chunk_size):
        indices = np.arange(start, min(start + chunk_size, 2 ** n), dtype=np.int64)
        spins = (1 - 2 * ((indices[:, None] >> shifts) & 1)).astype(np.int8)
        if len(pairs):
            parities = spins[:, pairs[:, 0]] * spins[:, pairs[:, 1]]
            energies = parities @ couplings
        else:
            energies = np.zeros(len(indices))

        chunk_min = float(energies.min())
        if chunk_min < best - tolerance:
            best = chunk_min
            minimizers = []
        if chunk_min <= best + tolerance:
            best = min(best, chunk_min)
            hits = np.nonzero(energies <= best + tolerance)[0]
            minimizers.extend(spins[h].copy() for h in hits)

    minimizers = [m for m in minimizers if inst.energy(m) <= best + tolerance]
    return best, minimizers
