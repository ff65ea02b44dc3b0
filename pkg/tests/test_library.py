"""
Tests for the greedy protocol library.
"""

import json

import pytest

from lhz_protocols.cohort import final_state_verdict, sample_instances
from lhz_protocols.library import (
    HARD_INSTANCE,
    NEW_PROTOCOL,
    LibraryConfig,
    LibraryEntry,
    ProtocolLibrary,
    build_library,
    classify_instance,
    distinct_group_fraction,
)
from lhz_protocols.optimize import DcrabConfig, TimeSearchConfig
from lhz_protocols.physics.schedule import linear_schedule


@pytest.fixture
def library_config():
    return LibraryConfig(f_minus=0.3, f_plus=0.5, saturation_window=2)


@pytest.fixture
def cheap_dcrab():
    return DcrabConfig(n_superiterations=1, inner_max_evaluations=4)


@pytest.fixture
def short_search():
    return TimeSearchConfig(t_cap=50.0)


@pytest.fixture
def two_ramp_library():
    """Library holding a sudden ramp and a slow ramp."""
    return ProtocolLibrary(entries=[
        LibraryEntry(linear_schedule(0.01), 'fast'),
        LibraryEntry(linear_schedule(30.0), 'slow'),
    ])


class TestClassify:

    def test_zero_threshold_matches_first(self, three_spin_instance, two_ramp_library, fast_settings):
        result = classify_instance(three_spin_instance, two_ramp_library, 0.0, settings=fast_settings)
        assert result.index == 0
        assert len(result.fidelities) == 2

    def test_best_order_prefers_highest(self, three_spin_instance, two_ramp_library, fast_settings):
        result = classify_instance(
            three_spin_instance, two_ramp_library, 0.0, settings=fast_settings, match_order='best',
        )
        assert result.index == 1
        assert result.fidelities[1] > result.fidelities[0]

    def test_unreachable_threshold(self, three_spin_instance, two_ramp_library, fast_settings):
        result = classify_instance(three_spin_instance, two_ramp_library, 1.01, settings=fast_settings)
        assert not result.matched

    def test_empty_library(self, three_spin_instance):
        with pytest.raises(ValueError):
            classify_instance(three_spin_instance, ProtocolLibrary(), 0.5)


class TestBuildLibrary:

    def test_single_instance_stream(self, three_spin_instance, library_config, cheap_dcrab, short_search, fast_settings):
        lib = build_library([three_spin_instance], library_config, cheap_dcrab, short_search, settings=fast_settings)
        assert len(lib) == 1
        assert lib.growth_log[0].decision == NEW_PROTOCOL
        assert lib.growth_log[0].fidelity >= 0.5
        assert lib.entries[0].parent_id == 'fixture-3'
        assert not lib.saturated

    def test_repeated_instance_saturates(self, three_spin_instance, library_config, cheap_dcrab, short_search, fast_settings):
        positions = []
        lib = build_library(
            [three_spin_instance] * 3,
            library_config, cheap_dcrab, short_search,
            settings=fast_settings,
            on_step=lambda position, step: positions.append(position),
        )
        assert len(lib) == 1
        assert [s.decision for s in lib.growth_log] == [NEW_PROTOCOL, 0, 0]
        assert lib.growth_curve() == [1, 1, 1]
        assert lib.saturated
        assert positions == [0, 1, 2]

    def test_hard_instance_is_skipped(self, three_spin_instance, library_config, cheap_dcrab, fast_settings):
        search = TimeSearchConfig(t_initial=0.01, t_cap=0.01)
        lib = build_library([three_spin_instance], library_config, cheap_dcrab, search, settings=fast_settings)
        assert len(lib) == 0
        assert lib.growth_log[0].decision == HARD_INSTANCE
        assert lib.hard_ids == ['fixture-3']

    def test_empty_stream(self):
        with pytest.raises(ValueError):
            build_library([])

    def test_serialized_library_restores(self, three_spin_instance, library_config, cheap_dcrab, short_search, fast_settings):
        lib = build_library([three_spin_instance], library_config, cheap_dcrab, short_search, settings=fast_settings)
        restored = ProtocolLibrary.from_dict(json.loads(json.dumps(lib.to_dict())))
        assert restored.config == library_config
        assert restored.entries[0].schedule.annealing_time == lib.entries[0].annealing_time
        assert restored.growth_curve() == lib.growth_curve()
        assert len(lib.csv_rows()) == 1


class TestLibraryConfig:

    def test_defaults_valid(self):
        assert LibraryConfig().problems() == []

    def test_inverted_thresholds(self):
        assert LibraryConfig(f_minus=0.9, f_plus=0.5).problems()

    def test_unknown_match_order(self):
        problems = LibraryConfig(match_order='random').problems()
        assert any('match_order' in p for p in problems)


@pytest.mark.parametrize('parents, expected', [
    ([0, 0, 1, None], 0.5),
    ([2, 1, 0], 1.0),
    ([], 0.0),
])
def test_distinct_group_fraction(parents, expected):
    assert distinct_group_fraction(parents) == expected


@pytest.mark.slow
def test_long_stream_saturates():
    stream = [inst for inst in sample_instances(300, 4, seed=23) if final_state_verdict(inst) is None]
    cfg = LibraryConfig(saturation_window=50)
    lib = build_library(stream, cfg, DcrabConfig(n_superiterations=2, inner_max_evaluations=20))
    assert lib.saturated
    assert len(lib) <= 30
    assert all(step.decision != NEW_PROTOCOL for step in lib.growth_log[-50:])
