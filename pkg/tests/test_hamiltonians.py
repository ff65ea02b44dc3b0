"""
Tests for the passage Hamiltonian building blocks.
"""

import itertools

import numpy as np
import pytest

from lhz_protocols.cohort import sample_instances
from lhz_protocols.errors import DomainError
from lhz_protocols.physics.hamiltonians import (
    assemble_passage,
    build_constraint_hamiltonian,
    build_initial_hamiltonian,
    build_problem_hamiltonian,
    final_ground_space,
    passage_operators,
    satisfies_constraints,
)
from lhz_protocols.physics.parity import basis_index, encode_configuration, map_logical_to_physical


class TestInitialHamiltonian:

    def test_two_qubit_driver(self):
        dense = build_initial_hamiltonian(2).to_dense()
        sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]])
        expected = -(np.kron(np.eye(2), sigma_x) + np.kron(sigma_x, np.eye(2)))
        np.testing.assert_allclose(dense, expected)

    def test_nonzero_count_and_hermiticity(self):
        driver = build_initial_hamiltonian(5)
        assert driver.nnz == 32 * 5
        assert driver.is_hermitian()

    def test_uniform_state_is_ground(self):
        driver = build_initial_hamiltonian(3)
        uniform = np.full(8, 1 / np.sqrt(8))
        np.testing.assert_allclose(driver.dot(uniform), -3 * uniform)

    def test_rejects_empty_register(self):
        with pytest.raises(DomainError):
            build_initial_hamiltonian(0)


class TestDiagonalTerms:

    def test_problem_entries(self, three_spin_physical):
        entries = build_problem_hamiltonian(three_spin_physical).entries
        assert entries[0] == pytest.approx(1.0)
        # flipping qubit 0 flips the sign of J_0 = 0.5
        assert entries[1] == pytest.approx(0.0)
        assert entries[basis_index([-1, 1, -1])] == pytest.approx(-1.6)

    def test_constraint_entries(self, three_spin_physical):
        entries = build_constraint_hamiltonian(three_spin_physical).entries
        assert entries[0] == -1.0
        assert entries[1] == 1.0
        assert sorted(entries) == [-1.0] * 4 + [1.0] * 4

    def test_constraint_counts_violations(self, four_spin_instances):
        phys = map_logical_to_physical(four_spin_instances[0])
        entries = build_constraint_hamiltonian(phys).entries
        assert entries.min() == -phys.n_constraints
        assert np.count_nonzero(entries == -phys.n_constraints) == 2 ** (phys.n_logical - 1)


class TestPassage:

    def test_endpoints(self, three_spin_physical):
        ops = passage_operators(three_spin_physical)
        start = assemble_passage(three_spin_physical, 0.0, 0.0).to_dense()
        np.testing.assert_allclose(start, ops.initial.to_dense())

        end = assemble_passage(three_spin_physical, 1.0, 2.0).to_dense()
        np.testing.assert_allclose(end, np.diag(ops.final_diagonal()))

    def test_is_hermitian_midway(self, three_spin_physical):
        assert assemble_passage(three_spin_physical, 0.4, 0.8).is_hermitian()

    @pytest.mark.parametrize('s_value, c_value', [(-0.1, 0.0), (1.2, 0.0), (0.5, -1.0)])
    def test_domain(self, three_spin_physical, s_value, c_value):
        with pytest.raises(DomainError):
            assemble_passage(three_spin_physical, s_value, c_value)

    def test_norm_bound(self, three_spin_physical):
        ops = passage_operators(three_spin_physical)
        assert ops.norm_bound == pytest.approx(3 + 1.6 + 2.0)

    def test_scaled_operators(self, three_spin_physical):
        ops = passage_operators(three_spin_physical)
        doubled = ops.scaled(2.0)
        np.testing.assert_allclose(doubled.final_diagonal(), 2 * ops.final_diagonal())
        assert doubled.norm_bound == pytest.approx(2 * ops.norm_bound)
        assert doubled.initial_scale == 2.0


class TestFinalGroundSpace:

    def test_unique_encoded_ground(self, three_spin_physical):
        energy, indices = final_ground_space(three_spin_physical)
        assert energy == pytest.approx(-1.6 - 2.0)
        assert list(indices) == [basis_index([-1, 1, -1])]
        assert satisfies_constraints(three_spin_physical, int(indices[0]))

    def test_zero_couplings_degenerate(self, zero_coupling_instance):
        _, indices = final_ground_space(map_logical_to_physical(zero_coupling_instance))
        assert len(indices) == 4

    def test_weak_constraint_violation(self, frustrated_instance):
        phys = map_logical_to_physical(frustrated_instance, c=0.5)
        _, indices = final_ground_space(phys)
        assert list(indices) == [basis_index([-1, -1, -1])]
        assert not satisfies_constraints(phys, int(indices[0]))


@pytest.mark.parametrize('n_logical', [3, 4, 5])
def test_constrained_spectrum_reproduces_logical_spectrum(n_logical):
    inst = sample_instances(1, n_logical, seed=12)[0]
    phys = map_logical_to_physical(inst)
    ops = passage_operators(phys)
    diagonal = ops.final_diagonal()
    satisfying = set(np.nonzero(ops.constraint.entries == -phys.n_constraints)[0].tolist())
    assert len(satisfying) == 2 ** (n_logical - 1)

    offset = phys.constraint_strength * phys.n_constraints
    encoded = set()
    for config in itertools.product((1, -1), repeat=n_logical):
        index = basis_index(encode_configuration(config))
        encoded.add(index)
        assert index in satisfying
        assert diagonal[index] == pytest.approx(inst.energy(config) - offset, abs=1e-12)
    assert encoded == satisfying
