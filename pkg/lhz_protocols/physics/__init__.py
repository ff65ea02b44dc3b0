"""
Physics package.

Contains modules for:
- Logical instances and the LHZ parity mapping
- Passage Hamiltonian construction
- Annealing protocols
- Exact diagonalization and gap analysis
- Time evolution and ground-state fidelity
"""

from .parity import (
    LogicalInstance,
    PhysicalInstance,
    Plaquette,
    decode_configuration,
    encode_configuration,
    enumerate_plaquettes,
    logical_ground_bruteforce,
    map_logical_to_physical,
)
from .hamiltonians import (
    DiagonalOperator,
    PassageOperators,
    SparseHermitianOperator,
    assemble_passage,
    build_constraint_hamiltonian,
    build_initial_hamiltonian,
    build_problem_hamiltonian,
    final_ground_space,
    passage_operators,
)
from .schedule import BasisTerm, Schedule, linear_schedule
from .spectrum import (
    GapSummary,
    SpectrumTrace,
    adiabatic_time_bound,
    gap_summary,
    instantaneous_spectrum,
)
from .dynamics import (
    EvolutionResult,
    EvolutionSettings,
    StateVector,
    evolve,
    evolve_with_retry,
    fidelity,
    group_fidelity,
)

__all__ = [
    'LogicalInstance',
    'PhysicalInstance',
    'Plaquette',
    'decode_configuration',
    'encode_configuration',
    'enumerate_plaquettes',
    'logical_ground_bruteforce',
    'map_logical_to_physical',
    'DiagonalOperator',
    'PassageOperators',
    'SparseHermitianOperator',
    'assemble_passage',
    'build_constraint_hamiltonian',
    'build_initial_hamiltonian',
    'build_problem_hamiltonian',
    'final_ground_space',
    'passage_operators',
    'BasisTerm',
    'Schedule',
    'linear_schedule',
    'GapSummary',
    'SpectrumTrace',
    'adiabatic_time_bound',
    'gap_summary',
    'instantaneous_spectrum',
    'EvolutionResult',
    'EvolutionSettings',
    'StateVector',
    'evolve',
    'evolve_with_retry',
    'fidelity',
    'group_fidelity',
]
