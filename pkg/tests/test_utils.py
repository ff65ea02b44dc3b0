"""
Tests for timing helpers, the artifact store, the worker pool and logging.
"""

import logging
import pickle

import pytest

from lhz_protocols.errors import (
    ArtifactExistsError,
    ConfigError,
    EmptyTestGroupError,
    GroupEvaluationError,
    HardnessError,
    InfeasibleQuotaError,
    IntegrationError,
    MissingArtifactError,
    ProtocolFormatError,
    SpectrumError,
)
from lhz_protocols.logging_config import get_logger, setup_logging
from lhz_protocols.utils.cache import (
    load_csv,
    load_json,
    load_jsonl,
    save_csv,
    save_json,
    save_jsonl,
    stable_hash,
)
from lhz_protocols.utils.timing import format_duration, retry_with_escalation
from lhz_protocols.workers import ordered_map

PROVENANCE = {'config_hash': 'abc', 'seed': 1}


def _square(value):
    return value * value


def _fail_on_two(value):
    if value == 2:
        raise SpectrumError(0.5, f'no convergence for item {value}')
    return value


class TestFormatDuration:

    @pytest.mark.parametrize('seconds, expected', [
        (0.25, '0.2s'),
        (59.96, '60.0s'),
        (61.5, '1m 1.5s'),
        (3725.0, '1h 2m 5.0s'),
    ])
    def test_format(self, seconds, expected):
        assert format_duration(seconds) == expected


class TestRetryWithEscalation:

    def test_escalates_until_success(self):
        seen = []

        def flaky(attempt):
            seen.append(attempt)
            if attempt < 2:
                raise IntegrationError(1e-3, 100 * 2 ** attempt)
            return 'ok'

        assert retry_with_escalation(flaky, max_attempts=3, retry_on=(IntegrationError,)) == 'ok'
        assert seen == [0, 1, 2]

    def test_reraises_last_failure(self):
        def always(attempt):
            raise IntegrationError(1e-3, 2000 * 2 ** attempt)

        with pytest.raises(IntegrationError) as excinfo:
            retry_with_escalation(always, max_attempts=2, retry_on=(IntegrationError,))
        assert excinfo.value.steps == 4000

    def test_other_errors_pass_through(self):
        def broken(attempt):
            raise KeyError('x')

        with pytest.raises(KeyError):
            retry_with_escalation(broken, retry_on=(IntegrationError,))

    def test_needs_an_attempt(self):
        with pytest.raises(ValueError):
            retry_with_escalation(lambda attempt: None, max_attempts=0)


class TestArtifactStore:

    def test_json(self, tmp_path):
        path = tmp_path / 'nested' / 'a.json'
        save_json(path, {'b': 2, 'a': 1}, PROVENANCE)
        assert load_json(path, 'stage') == {'a': 1, 'b': 2, 'provenance': PROVENANCE}
        assert path.read_text().index('"a"') < path.read_text().index('"b"')

    def test_refuses_existing(self, tmp_path):
        path = tmp_path / 'a.json'
        save_json(path, {}, PROVENANCE)
        with pytest.raises(ArtifactExistsError):
            save_json(path, {}, PROVENANCE)
        save_json(path, {'x': 1}, PROVENANCE, overwrite=True)
        assert load_json(path, 'stage')['x'] == 1

    def test_missing(self, tmp_path):
        with pytest.raises(MissingArtifactError) as excinfo:
            load_jsonl(tmp_path / 'none.jsonl', 'sample')
        assert excinfo.value.stage == 'sample'

    def test_jsonl(self, tmp_path):
        path = tmp_path / 'rows.jsonl'
        assert save_jsonl(path, [{'id': 'a'}, {'id': 'b'}], PROVENANCE) == 2
        records = load_jsonl(path, 'stage')
        assert [r['id'] for r in records] == ['a', 'b']
        assert records[0]['provenance'] == PROVENANCE

    def test_csv_skips_provenance_line(self, tmp_path):
        path = tmp_path / 'table.csv'
        save_csv(path, ['name', 'value', 'missing'], [['x', 0.1, None]], PROVENANCE)
        assert path.read_text().startswith('# ')
        assert load_csv(path, 'stage') == [{'name': 'x', 'value': '0.1', 'missing': ''}]

    def test_stable_hash_ignores_key_order(self):
        assert stable_hash({'a': 1, 'b': [1, 2]}) == stable_hash({'b': [1, 2], 'a': 1})
        assert stable_hash({'a': 1}) != stable_hash({'a': 2})


class TestOrderedMap:

    def test_in_process(self):
        assert ordered_map(_square, [3, 1, 2]) == [9, 1, 4]

    def test_worker_processes_keep_order(self):
        assert ordered_map(_square, list(range(8)), workers=2) == [n * n for n in range(8)]

    def test_worker_error_reaches_caller(self):
        with pytest.raises(SpectrumError) as excinfo:
            ordered_map(_fail_on_two, [1, 2, 3], workers=2)
        assert excinfo.value.tau == 0.5
        assert excinfo.value.exit_code == 3


class TestLogging:

    def test_stage_context_and_sidecar(self, tmp_path, capsys):
        log_file = tmp_path / 'run.log'
        setup_logging('spectra', log_file=str(log_file))
        get_logger('lhz_protocols.test').info('hello')
        logging.getLogger().handlers[-1].flush()

        assert '[INFO] [stage=spectra] hello' in capsys.readouterr().out
        assert 'stage=spectra' in log_file.read_text()

    def test_debug_level(self):
        setup_logging('sample', debug=True)
        assert logging.getLogger().level == logging.DEBUG
        setup_logging('sample')
        assert logging.getLogger().level == logging.INFO


class TestErrorPickling:

    @pytest.mark.parametrize('error, fields', [
        (ProtocolFormatError('basis.0.omega', 'must be a number'), {'location': 'basis.0.omega'}),
        (ConfigError(['quota must be positive', 'seed must be non-negative']),
         {'problems': ['quota must be positive', 'seed must be non-negative']}),
        (InfeasibleQuotaError(1, 30, 50), {'group_index': 1, 'size': 30, 'quota': 50}),
        (EmptyTestGroupError(2), {'group_index': 2}),
        (MissingArtifactError('sample', 'runs/x/instances.jsonl'), {'stage': 'sample'}),
        (SpectrumError(0.25, 'no convergence'), {'tau': 0.25, 'message': 'no convergence'}),
        (IntegrationError(1e-3, 4000, 'n5-s0-000001'), {'steps': 4000, 'instance_id': 'n5-s0-000001'}),
        (GroupEvaluationError(['a-1', 'b-2']), {'failing_ids': ['a-1', 'b-2']}),
        (HardnessError(1000.0, ['a-1'], 0.42), {'t_cap': 1000.0, 'instance_ids': ['a-1'], 'best_fidelity': 0.42}),
    ])
    def test_survives_pickle(self, error, fields):
        restored = pickle.loads(pickle.dumps(error))
        assert type(restored) is type(error)
        assert str(restored) == str(error)
        for name, value in fields.items():
            assert getattr(restored, name) == value
