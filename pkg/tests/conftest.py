"""
Shared fixtures: small hand-checked instances and cheap run configurations.
"""

import numpy as np
import pytest

from lhz_protocols.cohort import sample_instances
from lhz_protocols.config import load_config
from lhz_protocols.physics.dynamics import EvolutionSettings
from lhz_protocols.physics.parity import LogicalInstance, map_logical_to_physical


@pytest.fixture
def three_spin_instance():
    """
    N=3 instance with a unique logical ground state (1, -1, 1), energy -1.6.

    Couplings in pair order (0,1), (0,2), (1,2).
    """
    return LogicalInstance(n_logical=3, couplings=(0.5, -0.3, 0.8), seed=7, instance_id='fixture-3')


@pytest.fixture
def three_spin_physical(three_spin_instance):
    return map_logical_to_physical(three_spin_instance)


@pytest.fixture
def zero_coupling_instance():
    return LogicalInstance(n_logical=3, couplings=(0.0, 0.0, 0.0), instance_id='zero-3')


@pytest.fixture
def frustrated_instance():
    """All-ferro-penalised triangle: the unconstrained field minimum violates the plaquette."""
    return LogicalInstance(n_logical=3, couplings=(1.0, 1.0, 1.0), instance_id='frustrated-3')


@pytest.fixture
def four_spin_instances():
    return sample_instances(5, 4, seed=11)


@pytest.fixture
def fast_settings():
    return EvolutionSettings(min_steps=2000, steps_per_unit=40.0)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def small_run_config(tmp_path):
    """Tiny N=3 pipeline configuration writing into a temporary directory."""
    return load_config(
        profile='desk',
        overrides={
            'n_logical': 3,
            'sample_size': 40,
            'n_groups': 2,
            'quota': 5,
            'test_quota': 3,
            'grid_points': 33,
            'histogram_bins': 8,
            'library_stream_size': 4,
            'output_dir': str(tmp_path / 'run'),
            'seed': 5,
            'dcrab.n_superiterations': 1,
            'dcrab.inner_max_evaluations': 4,
            'dcrab.target_fidelity': 0.6,
            'search.t_cap': 200.0,
            'library.f_minus': 0.3,
            'library.f_plus': 0.5,
            'library.saturation_window': 2,
        },
        environ={},
    )
