"""
Tests for annealing schedules and protocol files.
"""

import json
import math

import numpy as np
import pytest

from lhz_protocols.errors import DomainError, ProtocolFormatError
from lhz_protocols.physics.schedule import (
    BasisTerm,
    Schedule,
    constraint_ramp,
    deserialize,
    evaluate,
    linear_schedule,
    load_protocol,
    serialize,
)


@pytest.fixture
def three_term_schedule():
    terms = (
        BasisTerm(omega=1.3, a=0.2, b=-0.1),
        BasisTerm(omega=4.7, a=-0.05, b=0.3),
        BasisTerm(omega=8.1, a=0.01, b=0.02),
    )
    return Schedule(annealing_time=12.5, basis=terms)


class TestLinearSchedule:

    @pytest.mark.parametrize('tau', [0.0, 0.25, 0.5, 1.0])
    def test_identity_ramp(self, tau):
        assert evaluate(linear_schedule(10.0), tau) == tau

    def test_non_positive_time(self):
        with pytest.raises(DomainError):
            linear_schedule(0.0)

    def test_tau_outside_unit_interval(self):
        with pytest.raises(DomainError):
            evaluate(linear_schedule(1.0), 1.01)

    def test_is_linear(self):
        schedule = linear_schedule(3.0)
        assert schedule.is_linear
        assert schedule.lineage_depth == 0


class TestBasisExpansion:

    def test_endpoints_are_exact(self, three_term_schedule):
        assert three_term_schedule.evaluate(0.0) == 0.0
        assert three_term_schedule.evaluate(1.0) == 1.0

    def test_clamp_saturates(self):
        schedule = Schedule(annealing_time=1.0, basis=(BasisTerm(omega=0.25, a=10.0, b=0.0),))
        assert schedule.evaluate(0.5) == 1.0

    def test_unclamped_form(self):
        schedule = Schedule(annealing_time=1.0, basis=(BasisTerm(omega=0.25, a=10.0, b=0.0),), clamp=False)
        expected = 0.5 + 0.25 * 10.0 * math.sin(2 * math.pi * 0.25 * 0.5)
        assert schedule.evaluate(0.5) == pytest.approx(expected)

    def test_guess_composition(self):
        inner = linear_schedule(5.0)
        wrapped = Schedule(annealing_time=5.0, guess=inner)
        for tau in np.linspace(0, 1, 11):
            assert wrapped.evaluate(float(tau)) == inner.evaluate(float(tau))

    def test_dressing_keeps_lineage(self, three_term_schedule):
        dressed = three_term_schedule.dressed([BasisTerm(2.0, 0.1, 0.1)])
        assert dressed.guess is three_term_schedule
        assert dressed.lineage_depth == 1
        assert dressed.annealing_time == three_term_schedule.annealing_time

    def test_sample_matches_evaluate(self, three_term_schedule):
        taus = np.linspace(0, 1, 37)
        sampled = three_term_schedule.sample(taus)
        np.testing.assert_allclose(sampled, [three_term_schedule.evaluate(float(t)) for t in taus], atol=1e-14)

    def test_derivative_matches_finite_difference(self):
        schedule = Schedule(
            annealing_time=1.0,
            basis=(BasisTerm(omega=1.7, a=0.3, b=-0.2),),
            clamp=False,
        )
        h = 1e-6
        for tau in (0.1, 0.45, 0.8):
            numeric = (schedule.evaluate(tau + h) - schedule.evaluate(tau - h)) / (2 * h)
            assert schedule.derivative(tau) == pytest.approx(numeric, rel=1e-6, abs=1e-8)

    def test_monotone_check(self):
        assert linear_schedule(1.0).is_monotone()
        wiggly = Schedule(annealing_time=1.0, basis=(BasisTerm(omega=2.0, a=3.0, b=0.0),), clamp=False)
        assert not wiggly.is_monotone()

    def test_with_time_keeps_shape(self, three_term_schedule):
        longer = three_term_schedule.with_time(40.0)
        assert longer.annealing_time == 40.0
        assert longer.evaluate(0.3) == three_term_schedule.evaluate(0.3)


class TestConstraintRamp:

    def test_decoupled(self):
        schedule = linear_schedule(1.0, c=2.0)
        assert constraint_ramp(schedule, 0.0) == 0.0
        assert constraint_ramp(schedule, 0.25) == 0.5
        assert constraint_ramp(schedule, 1.0) == 2.0

    def test_nested_follows_schedule(self):
        terms = (BasisTerm(omega=1.0, a=0.4, b=0.0),)
        schedule = Schedule(annealing_time=1.0, basis=terms, constraint_c=2.0, coupling_mode='nested')
        assert schedule.constraint_ramp(0.3) == pytest.approx(2.0 * schedule.evaluate(0.3))
        assert schedule.constraint_ramp(1.0) == 2.0

    def test_unknown_mode(self):
        with pytest.raises(DomainError):
            Schedule(annealing_time=1.0, coupling_mode='sideways')


class TestProtocolFiles:

    def test_round_trip_keeps_values(self, three_term_schedule):
        dressed = three_term_schedule.dressed([BasisTerm(3.0, 0.05, -0.05)])
        restored = deserialize(json.loads(json.dumps(serialize(dressed))))
        assert restored.lineage_depth == 1
        for tau in np.linspace(0, 1, 21):
            assert restored.evaluate(float(tau)) == pytest.approx(dressed.evaluate(float(tau)), abs=1e-15)

    def test_linear_round_trip(self):
        schedule = linear_schedule(7.0, c=1.5, coupling_mode='nested')
        assert deserialize(serialize(schedule)) == schedule

    def test_missing_field_location(self):
        payload = serialize(Schedule(annealing_time=1.0, basis=(BasisTerm(1.0, 0.1, 0.1),)))
        del payload['basis'][0]['omega']
        with pytest.raises(ProtocolFormatError) as excinfo:
            deserialize(payload)
        assert excinfo.value.location == 'protocol.basis[0].omega'

    def test_rejects_broken_endpoint(self):
        payload = serialize(linear_schedule(1.0))
        payload['basis'] = [{'omega': 1.0, 'a': float('nan'), 'b': 0.0}]
        with pytest.raises(ProtocolFormatError, match='endpoint'):
            deserialize(payload)

    def test_malformed_json_reports_position(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"T": 1.0,\n "C": }')
        with pytest.raises(ProtocolFormatError) as excinfo:
            load_protocol(path)
        assert excinfo.value.location.startswith(f'{path}:2:')

    def test_load_wrapped_protocol(self, tmp_path):
        path = tmp_path / 'g1.json'
        path.write_text(json.dumps({'group': 'g1', 'protocol': serialize(linear_schedule(2.0))}))
        assert load_protocol(path) == linear_schedule(2.0)
