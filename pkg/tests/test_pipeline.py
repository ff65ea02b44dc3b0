"""
Tests for the pipeline stages and the command-line entry point.
"""

import csv
import json
import os
from pathlib import Path

import pytest

from lhz_protocols.errors import ArtifactExistsError, MissingArtifactError
from lhz_protocols.main import main, parse_args
from lhz_protocols.pipeline import RunPaths, cmd_group, cmd_sample, cmd_spectra
from lhz_protocols.utils.cache import load_csv, load_json, load_jsonl


SMALL_RUN = {
    'n_logical': 3,
    'sample_size': 40,
    'n_groups': 2,
    'quota': 5,
    'test_quota': 3,
    'grid_points': 33,
    'histogram_bins': 8,
    'library_stream_size': 4,
    'seed': 5,
    'dcrab': {'n_superiterations': 1, 'inner_max_evaluations': 4, 'target_fidelity': 0.6},
    'search': {'t_cap': 200.0},
    'library': {'f_minus': 0.3, 'f_plus': 0.5, 'saturation_window': 2},
}


@pytest.fixture
def paths(small_run_config):
    return RunPaths(Path(small_run_config.output_dir))


@pytest.fixture
def cli_env(tmp_path, monkeypatch):
    """Clean working directory and environment for main(); returns (config path, run dir)."""
    for name in list(os.environ):
        if name.startswith('LHZ_'):
            monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    run_dir = tmp_path / 'cli-run'
    config_path = tmp_path / 'small.json'
    config_path.write_text(json.dumps({**SMALL_RUN, 'output_dir': str(run_dir)}))
    return config_path, run_dir


def _run_main(argv):
    with pytest.raises(SystemExit) as excinfo:
        main(argv)
    return excinfo.value.code


# ============================================================================
# Stages
# ============================================================================

class TestStages:

    def test_sample(self, small_run_config, paths):
        assert cmd_sample(small_run_config) == 0
        records = load_jsonl(paths.instances, 'sample')
        assert len(records) == 40
        assert records[0]['id'] == 'n3-s5-000000'
        assert records[0]['provenance']['config_hash'] == small_run_config.config_hash()

    def test_refuses_overwrite(self, small_run_config):
        cmd_sample(small_run_config)
        with pytest.raises(ArtifactExistsError):
            cmd_sample(small_run_config)

    def test_overwrite_is_byte_identical(self, small_run_config, paths):
        cmd_sample(small_run_config)
        first = paths.instances.read_bytes()
        cmd_sample(small_run_config, overwrite=True)
        assert paths.instances.read_bytes() == first

    def test_spectra_needs_sample(self, small_run_config):
        with pytest.raises(MissingArtifactError) as excinfo:
            cmd_spectra(small_run_config)
        assert excinfo.value.exit_code == 2
        assert excinfo.value.stage == 'sample'

    def test_spectra_and_group(self, small_run_config, paths):
        cmd_sample(small_run_config)
        assert cmd_spectra(small_run_config) == 0
        assert len(load_jsonl(paths.spectra, 'spectra')) == 40
        report = load_json(paths.spectra_report, 'spectra')
        assert 0.0 <= report['multi_minimum_ratio'] <= 1.0

        with open(paths.spectrum_levels, newline='') as f:
            rows = [row for row in csv.reader(f) if not row[0].startswith('#')]
        assert rows[0] == ['tau', 'level_0', 'level_1', 'level_2', 'level_3']
        assert len(rows) == 34

        assert cmd_group(small_run_config) == 0
        grouping = load_json(paths.grouping, 'group')
        assert [g['label'] for g in grouping['groups']] == ['g1', 'g2']
        assert all(len(g['members']) == 5 for g in grouping['groups'])
        assert all(0 < len(g['test_members']) <= 3 for g in grouping['groups'])
        assert paths.histogram.exists()
        assert paths.gap_traces.exists()

        first = paths.grouping.read_bytes()
        cmd_group(small_run_config, overwrite=True)
        assert paths.grouping.read_bytes() == first

    def test_group_needs_spectra(self, small_run_config):
        cmd_sample(small_run_config)
        with pytest.raises(MissingArtifactError) as excinfo:
            cmd_group(small_run_config)
        assert excinfo.value.stage == 'spectra'


# ============================================================================
# Command line
# ============================================================================

class TestCommandLine:

    def test_parse_args(self):
        args = parse_args(['group', '--seed', '3', '--workers', '2', '--overwrite'])
        assert args.command == 'group'
        assert args.seed == 3
        assert args.workers == 2
        assert args.overwrite

    def test_sample_exit_zero(self, cli_env):
        config_path, run_dir = cli_env
        assert _run_main(['sample', '--config', str(config_path)]) == 0
        assert (run_dir / 'instances.jsonl').exists()
        assert (run_dir / 'run.log').exists()

    def test_missing_artifact_exit_code(self, cli_env):
        config_path, _ = cli_env
        assert _run_main(['optimize', '--config', str(config_path)]) == 2

    def test_existing_artifact_exit_code(self, cli_env):
        config_path, _ = cli_env
        _run_main(['sample', '--config', str(config_path)])
        assert _run_main(['sample', '--config', str(config_path)]) == 1
        assert _run_main(['sample', '--config', str(config_path), '--overwrite']) == 0

    def test_invalid_config_exit_code(self, cli_env, tmp_path):
        bad = tmp_path / 'bad.json'
        bad.write_text(json.dumps({'quota': 0}))
        assert _run_main(['sample', '--config', str(bad)]) == 1

    def test_out_flag_wins(self, cli_env, tmp_path):
        config_path, _ = cli_env
        elsewhere = tmp_path / 'elsewhere'
        assert _run_main(['sample', '--config', str(config_path), '--out', str(elsewhere)]) == 0
        assert (elsewhere / 'instances.jsonl').exists()

    @pytest.mark.slow
    def test_full_run(self, cli_env):
        config_path, run_dir = cli_env
        assert _run_main(['all', '--config', str(config_path)]) == 0
        for name in ('grouping.json', 'fidelities.csv', 'group_fidelities.csv', 'speedup.csv',
                     'library.json', 'library_growth.csv', 'protocol_shapes.csv', 'hard_instances.json'):
            assert (run_dir / name).exists(), name
        library = load_json(run_dir / 'library.json', 'library')
        assert library['report']['consumed'] <= 4


# ============================================================================
# Desk-scale acceptance
# ============================================================================

@pytest.fixture(scope='module')
def desk_run(tmp_path_factory):
    """Desk profile run through the speed-up stage; returns the run directory."""
    run_dir = tmp_path_factory.mktemp('desk') / 'run'
    with pytest.MonkeyPatch.context() as mp:
        for name in list(os.environ):
            if name.startswith('LHZ_'):
                mp.delenv(name)
        mp.chdir(run_dir.parent)
        common = ['--profile', 'desk', '--out', str(run_dir), '--workers', str(os.cpu_count() or 1)]
        for stage in ('sample', 'spectra', 'group', 'optimize', 'evaluate', 'speedup'):
            assert _run_main([stage] + common) == 0, stage
    return run_dir


@pytest.mark.slow
def test_desk_speedup_band(desk_run):
    rows = {row['group']: row for row in load_csv(desk_run / 'speedup.csv', 'speedup')}
    assert float(rows.pop('average')['speedup_factor']) >= 2.0
    for label, row in rows.items():
        if row['absent'] == '0':
            assert float(row['speedup_factor']) >= 1.0, label


@pytest.mark.slow
def test_desk_protocols_generalize(desk_run):
    for row in load_csv(desk_run / 'group_fidelities.csv', 'evaluate'):
        assert abs(float(row['train_minus_test'])) <= 0.05, row['group']

    test_fidelities = [
        float(row['fidelity_optimized'])
        for row in load_csv(desk_run / 'fidelities.csv', 'evaluate')
        if row['split'] == 'test'
    ]
    assert test_fidelities
    assert sum(f >= 0.5 for f in test_fidelities) / len(test_fidelities) >= 0.95
