"""
Tests for layered configuration loading and validation.
"""

import json

import pytest

from lhz_protocols.config import PROFILES, load_config, read_config_file
from lhz_protocols.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    def write(payload, name='run.json'):
        path = tmp_path / name
        path.write_text(json.dumps(payload))
        return path
    return write


class TestLoadConfig:

    def test_desk_defaults(self):
        cfg = load_config(environ={})
        assert cfg.profile == 'desk'
        assert cfg.sample_size == PROFILES['desk']['sample_size']
        assert cfg.n_logical == 5
        assert cfg.dcrab.seed == 0
        assert cfg.library.stream_seed == 1

    def test_paper_profile(self):
        cfg = load_config('paper', environ={})
        assert cfg.sample_size == 40000
        assert cfg.quota == 400
        assert cfg.output_dir == 'runs/paper'

    def test_profile_from_environment(self):
        assert load_config(environ={'LHZ_PROFILE': 'paper'}).profile == 'paper'

    def test_environment_seed_propagates(self):
        cfg = load_config(environ={'LHZ_SEED': '9'})
        assert cfg.seed == 9
        assert cfg.dcrab.seed == 9
        assert cfg.library.stream_seed == 10

    def test_explicit_section_seed_wins(self):
        cfg = load_config(overrides={'seed': 4, 'dcrab.seed': 40}, environ={})
        assert cfg.dcrab.seed == 40

    def test_precedence(self, config_file):
        path = config_file({'quota': 30, 'n_groups': 4})
        cfg = load_config(config_path=path, overrides={'quota': 40}, environ={'LHZ_QUOTA': '20', 'LHZ_N_GROUPS': '3'})
        assert cfg.quota == 40
        assert cfg.n_groups == 4

    def test_nested_sections(self, config_file):
        path = config_file({'dcrab': {'target_fidelity': 0.8}, 'library': {'match_order': 'best'}})
        cfg = load_config(config_path=path, environ={})
        assert cfg.dcrab.target_fidelity == 0.8
        assert cfg.library.match_order == 'best'

    def test_none_overrides_ignored(self):
        assert load_config(overrides={'seed': None}, environ={}).seed == 0

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            load_config('huge', environ={})


class TestValidation:

    def test_every_problem_listed(self):
        with pytest.raises(ConfigError) as excinfo:
            load_config(overrides={'n_logical': 2, 'train_fraction': 1.5, 'coupling_mode': 'odd'}, environ={})
        assert len(excinfo.value.problems) == 3
        assert excinfo.value.exit_code == 1

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='bogus'):
            load_config(overrides={'bogus': 1}, environ={})

    def test_dimension_limit(self):
        with pytest.raises(ConfigError, match='dimension'):
            load_config(overrides={'n_logical': 6}, environ={})

    def test_sample_too_small_for_quota(self):
        with pytest.raises(ConfigError, match='training instances'):
            load_config(overrides={'sample_size': 100}, environ={})

    def test_bad_environment_value(self):
        with pytest.raises(ConfigError, match='LHZ_SEED'):
            load_config(environ={'LHZ_SEED': 'abc'})

    def test_wrong_type_in_file(self, config_file):
        with pytest.raises(ConfigError):
            load_config(config_path=config_file({'quota': 'ten'}), environ={})

    def test_malformed_file(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"seed": }')
        with pytest.raises(ConfigError, match='broken.json:1:'):
            read_config_file(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            read_config_file(tmp_path / 'absent.json')


class TestHash:

    def test_stable(self):
        assert load_config(environ={}).config_hash() == load_config(environ={}).config_hash()

    def test_ignores_system_settings(self):
        base = load_config(environ={}).config_hash()
        moved = load_config(overrides={'workers': 4, 'output_dir': '/tmp/elsewhere', 'debug': True}, environ={})
        assert moved.config_hash() == base

    def test_tracks_physics(self):
        base = load_config(environ={}).config_hash()
        assert load_config(overrides={'constraint_strength': 3.0}, environ={}).config_hash() != base
        assert load_config(overrides={'dcrab.target_fidelity': 0.8}, environ={}).config_hash() != base

    def test_provenance(self):
        provenance = load_config(overrides={'seed': 3}, environ={}).provenance()
        assert provenance['seed'] == 3
        assert provenance['dcrab_seed'] == 3
        assert provenance['stream_seed'] == 4
        assert len(provenance['config_hash']) == 32
