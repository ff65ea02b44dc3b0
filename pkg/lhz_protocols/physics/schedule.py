"""
Annealing protocols.

A schedule is s(tau) = g(tau) + lambda(tau) * sum_n [a_n sin(2 pi w_n tau) + b_n cos(2 pi w_n tau)]
with guess g (the linear ramp or a previous schedule), boundary function
lambda(tau) = tau (1 - tau) pinning s(0) = 0 and s(1) = 1, and an optional
clamp into [0, 1]. A(tau) = 1 - s(tau), B(tau) = s(tau).

Schedules are immutable; dressing a schedule wraps it as the guess of a new
one, so the full dCRAB lineage is kept and serialised.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from ..errors import DomainError, ProtocolFormatError

COUPLING_MODES = ('decoupled', 'nested')
DEFAULT_CONSTRAINT_C = 2.0


@dataclass(frozen=True)
class BasisTerm:
    """One chopped-random-basis component."""

    omega: float
    a: float
    b: float

    def value(self, tau: float) -> float:
        phase = 2.0 * math.pi * self.omega * tau
        return self.a * math.sin(phase) + self.b * math.cos(phase)

    def slope(self, tau: float) -> float:
        phase = 2.0 * math.pi * self.omega * tau
        return 2.0 * math.pi * self.omega * (self.a * math.cos(phase) - self.b * math.sin(phase))


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f'tau={tau} outside [0, 1]')


@dataclass(frozen=True)
class Schedule:
    """
    Parameterised annealing protocol with annealing time T.

    Attributes:
        annealing_time: T > 0
        guess: Previous schedule, or None for the linear ramp
        basis: Chopped-random-basis terms added on top of the guess
        clamp: Clamp s(tau) into [0, 1]
        constraint_c: Final constraint strength C
        coupling_mode: 'decoupled' (c = tau C) or 'nested' (c = s(tau) C)
    """

    annealing_time: float
    guess: Optional['Schedule'] = None
    basis: Tuple[BasisTerm, ...] = ()
    clamp: bool = True
    constraint_c: float = DEFAULT_CONSTRAINT_C
    coupling_mode: str = 'decoupled'

    def __post_init__(self):
        if not self.annealing_time > 0:
            raise DomainError(f'Annealing time must be positive, got {self.annealing_time}')
        if self.coupling_mode not in COUPLING_MODES:
            raise DomainError(f'Unknown coupling mode {self.coupling_mode!r}')
        if self.constraint_c < 0:
            raise DomainError(f'Constraint strength must be non-negative, got {self.constraint_c}')
        object.__setattr__(self, 'basis', tuple(self.basis))
        object.__setattr__(self, 'annealing_time', float(self.annealing_time))

    def _guess_value(self, tau: float) -> float:
        return tau if self.guess is None else self.guess.evaluate(tau)

    def _guess_slope(self, tau: float) -> float:
        return 1.0 if self.guess is None else self.guess.derivative(tau)

    def _raw(self, tau: float) -> float:
        value = self._guess_value(tau)
        if self.basis:
            envelope = tau * (1.0 - tau)
            value += envelope * sum(term.value(tau) for term in self.basis)
        return value

    def evaluate(self, tau: float) -> float:
        """s(tau), clamped into [0, 1] when clamp is set."""
        _check_tau(tau)
        value = self._raw(tau)
        if self.clamp:
            value = min(max(value, 0.0), 1.0)
        return value

    def derivative(self, tau: float) -> float:
        """
        ds/dtau. Analytic for the unclamped form; zero where the clamp is active.
        """
        _check_tau(tau)
        if self.clamp:
            raw = self._raw(tau)
            if raw < 0.0 or raw > 1.0:
                return 0.0
        slope = self._guess_slope(tau)
        if self.basis:
            envelope = tau * (1.0 - tau)
            slope += (1.0 - 2.0 * tau) * sum(term.value(tau) for term in self.basis)
            slope += envelope * sum(term.slope(tau) for term in self.basis)
        return slope

    def constraint_ramp(self, tau: float) -> float:
        """Constraint weight c(tau): tau C (decoupled) or s(tau) C (nested)."""
        _check_tau(tau)
        if self.coupling_mode == 'nested':
            return self.evaluate(tau) * self.constraint_c
        return tau * self.constraint_c

    def constraint_derivative(self, tau: float) -> float:
        if self.coupling_mode == 'nested':
            return self.derivative(tau) * self.constraint_c
        return self.constraint_c

    def _raw_array(self, taus: np.ndarray) -> np.ndarray:
        values = taus.copy() if self.guess is None else self.guess.sample(taus)
        if self.basis:
            envelope = taus * (1.0 - taus)
            total = np.zeros_like(taus)
            for term in self.basis:
                phase = 2.0 * np.pi * term.omega * taus
                total += term.a * np.sin(phase) + term.b * np.cos(phase)
            values = values + envelope * total
        return values

    def sample(self, taus: Iterable[float]) -> np.ndarray:
        """Vectorised s(tau) over an array of grid points."""
        if not isinstance(taus, np.ndarray):
            taus = list(taus)
        taus = np.asarray(taus, dtype=float)
        if taus.size and (taus.min() < 0.0 or taus.max() > 1.0):
            raise DomainError('tau samples must lie in [0, 1]')
        values = self._raw_array(taus)
        if self.clamp:
            values = np.clip(values, 0.0, 1.0)
        return values

    def constraint_samples(self, taus: np.ndarray, s_values: Optional[np.ndarray] = None) -> np.ndarray:
        """Vectorised c(tau); pass precomputed s values to avoid resampling."""
        taus = np.asarray(taus, dtype=float)
        if self.coupling_mode == 'nested':
            s = self.sample(taus) if s_values is None else s_values
            return s * self.constraint_c
        return taus * self.constraint_c

    def is_monotone(self, points: int = 201) -> bool:
        return bool(np.all(np.diff(self.sample(np.linspace(0.0, 1.0, points))) >= 0.0))

    def with_time(self, annealing_time: float) -> 'Schedule':
        """Same shape, different annealing time."""
        return replace(self, annealing_time=annealing_time)

    def dressed(self, terms: Sequence[BasisTerm]) -> 'Schedule':
        """New schedule using this one as its guess."""
        return Schedule(
            annealing_time=self.annealing_time,
            guess=self,
            basis=tuple(terms),
            clamp=self.clamp,
            constraint_c=self.constraint_c,
            coupling_mode=self.coupling_mode,
        )

    @property
    def lineage_depth(self) -> int:
        """Number of dressing steps above the linear ramp."""
        return 0 if self.guess is None else 1 + self.guess.lineage_depth

    @property
    def is_linear(self) -> bool:
        return self.guess is None and not self.basis

    def to_dict(self) -> Dict[str, Any]:
        return {
            'T': self.annealing_time,
            'C': self.constraint_c,
            'mode': self.coupling_mode,
            'guess': 'linear' if self.guess is None else self.guess.to_dict(),
            'basis': [{'omega': t.omega, 'a': t.a, 'b': t.b} for t in self.basis],
            'clamp': self.clamp,
        }


def linear_schedule(
    t_anneal: float,
    c: float = DEFAULT_CONSTRAINT_C,
    coupling_mode: str = 'decoupled',
    clamp: bool = True,
) -> Schedule:
    """Linear ramp s(tau) = tau with annealing time T."""
    if not t_anneal > 0:
        raise DomainError(f'Annealing time must be positive, got {t_anneal}')
    return Schedule(annealing_time=t_anneal, constraint_c=c, coupling_mode=coupling_mode, clamp=clamp)


def evaluate(schedule: Schedule, tau: float) -> float:
    return schedule.evaluate(tau)


def constraint_ramp(schedule: Schedule, tau: float) -> float:
    return schedule.constraint_ramp(tau)


def _number(payload: Dict[str, Any], key: str, location: str) -> float:
    if key not in payload:
        raise ProtocolFormatError(f'{location}.{key}', 'missing')
    value = payload[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolFormatError(f'{location}.{key}', f'expected a number, got {value!r}')
    return float(value)


def _parse(payload: Any, location: str) -> Schedule:
    if not isinstance(payload, dict):
        raise ProtocolFormatError(location, 'expected an object')

    t_anneal = _number(payload, 'T', location)
    c = _number(payload, 'C', location)
    mode = payload.get('mode', 'decoupled')
    if mode not in COUPLING_MODES:
        raise ProtocolFormatError(f'{location}.mode', f'unknown mode {mode!r}')
    clamp = payload.get('clamp', True)
    if not isinstance(clamp, bool):
        raise ProtocolFormatError(f'{location}.clamp', 'expected a boolean')

    raw_guess = payload.get('guess', 'linear')
    if raw_guess == 'linear':
        guess = None
    elif isinstance(raw_guess, dict):
        guess = _parse(raw_guess, f'{location}.guess')
    else:
        raise ProtocolFormatError(f'{location}.guess', 'expected "linear" or a protocol object')

    raw_basis = payload.get('basis', [])
    if not isinstance(raw_basis, list):
        raise ProtocolFormatError(f'{location}.basis', 'expected a list')
    terms = []
    for n, term in enumerate(raw_basis):
        where = f'{location}.basis[{n}]'
        if not isinstance(term, dict):
            raise ProtocolFormatError(where, 'expected an object')
        terms.append(BasisTerm(
            omega=_number(term, 'omega', where),
            a=_number(term, 'a', where),
            b=_number(term, 'b', where),
        ))

    try:
        schedule = Schedule(
            annealing_time=t_anneal,
            guess=guess,
            basis=tuple(terms),
            clamp=clamp,
            constraint_c=c,
            coupling_mode=mode,
        )
    except DomainError as e:
        raise ProtocolFormatError(location, str(e)) from e

    if schedule.evaluate(0.0) != 0.0 or schedule.evaluate(1.0) != 1.0:
        raise ProtocolFormatError(location, 'endpoint pinning violated: s(0) != 0 or s(1) != 1')
    return schedule


def deserialize(payload: Dict[str, Any]) -> Schedule:
    """Rebuild a schedule (with its full guess lineage) from its JSON form."""
    return _parse(payload, 'protocol')


def serialize(schedule: Schedule) -> Dict[str, Any]:
    return schedule.to_dict()


def load_protocol(path: Path) -> Schedule:
    """
    Load a protocol file.

    Raises:
        ProtocolFormatError: On malformed JSON or invalid content
    """
    text = Path(path).read_text(encoding='utf-8')
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProtocolFormatError(f'{path}:{e.lineno}:{e.colno}', e.msg) from e
    if isinstance(payload, dict) and 'protocol' in payload:
        payload = payload['protocol']
    return deserialize(payload)
