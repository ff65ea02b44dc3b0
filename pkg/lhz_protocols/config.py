"""
Configuration module for the LHZ protocol workbench.

Settings are layered, lowest precedence first: profile preset, LHZ_*
environment variables, a JSON config file, CLI flags.
All settings are immutable after loading.
"""

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from .cohort import BALANCE_METHODS
from .errors import ConfigError
from .library import LibraryConfig
from .optimize import DcrabConfig, TimeSearchConfig
from .physics.dynamics import EvolutionSettings
from .physics.parity import n_pairs
from .physics.schedule import COUPLING_MODES
from .physics.spectrum import MAX_SPECTRUM_DIM, MIN_GRID_POINTS
from .utils.cache import stable_hash

PROFILES: Dict[str, Dict[str, Any]] = {
    'desk': {
        'sample_size': 4000,
        'quota': 50,
        'test_quota': 50,
        'grid_points': 101,
        'output_dir': 'runs/desk',
    },
    'paper': {
        'sample_size': 40000,
        'quota': 400,
        'test_quota': 400,
        'grid_points': 101,
        'output_dir': 'runs/paper',
    },
}

SECTIONS = ('dcrab', 'search', 'library', 'evolution')
NON_HASHED = ('output_dir', 'workers', 'debug')


@dataclass(frozen=True)
class RunConfig:
    """
    Immutable configuration of a pipeline run.

    Instances:
        n_logical: Logical spins N (K = N(N-1)/2 physical qubits)
        sample_size: Instances drawn before filtering
        seed: Master seed (sampling, splitting)

    Grouping:
        n_groups: Number of gap groups
        quota: Training instances kept per group
        test_quota: Test instances kept per group
        train_fraction: Share of the filtered sample used for training
        balance_method: 'greedy' boundary shifts or 'dp' optimal partition

    Physics:
        constraint_strength: Plaquette penalty C
        coupling_mode: 'decoupled' (c = tau C) or 'nested' (c = s C)
        grid_points: Spectrum grid size
        spectrum_levels: Tracked instantaneous levels
        degeneracy_tolerance: Final ground-space window for filtering

    Reporting:
        histogram_bins: Gap histogram bin count
        library_stream_size: Instances streamed into the protocol library

    System:
        profile: Preset the run started from
        output_dir: Artifact directory
        workers: Worker processes
        debug: Enable debug logging
    """

    profile: str = 'desk'
    n_logical: int = 5
    sample_size: int = 4000
    seed: int = 0

    n_groups: int = 6
    quota: int = 50
    test_quota: int = 50
    train_fraction: float = 0.5
    balance_method: str = 'greedy'

    constraint_strength: float = 2.0
    coupling_mode: str = 'decoupled'
    grid_points: int = 101
    spectrum_levels: int = 4
    degeneracy_tolerance: float = 1e-9

    histogram_bins: int = 50
    library_stream_size: int = 300

    dcrab: DcrabConfig = field(default_factory=DcrabConfig)
    search: TimeSearchConfig = field(default_factory=TimeSearchConfig)
    library: LibraryConfig = field(default_factory=LibraryConfig)
    evolution: EvolutionSettings = field(default_factory=EvolutionSettings)

    output_dir: str = 'runs/desk'
    workers: int = 1
    debug: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of every setting that can change an artifact."""
        payload = {k: v for k, v in self.to_dict().items() if k not in NON_HASHED}
        return stable_hash(payload)

    def provenance(self) -> Dict[str, Any]:
        return {
            'config_hash': self.config_hash(),
            'profile': self.profile,
            'seed': self.seed,
            'dcrab_seed': self.dcrab.seed,
            'stream_seed': self.library.stream_seed,
        }


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ('true', '1', 'yes', 'on'):
        return True
    if lowered in ('false', '0', 'no', 'off'):
        return False
    raise ValueError(f'not a boolean: {value!r}')


def _parse_optional_int(value: str) -> Optional[int]:
    if value.strip().lower() in ('all', 'none', ''):
        return None
    return int(value)


# env var -> (dotted field, converter)
ENV_FIELDS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    'LHZ_N_LOGICAL': ('n_logical', int),
    'LHZ_SAMPLE_SIZE': ('sample_size', int),
    'LHZ_SEED': ('seed', int),
    'LHZ_N_GROUPS': ('n_groups', int),
    'LHZ_QUOTA': ('quota', int),
    'LHZ_TEST_QUOTA': ('test_quota', int),
    'LHZ_TRAIN_FRACTION': ('train_fraction', float),
    'LHZ_BALANCE_METHOD': ('balance_method', str),
    'LHZ_CONSTRAINT_C': ('constraint_strength', float),
    'LHZ_COUPLING_MODE': ('coupling_mode', str),
    'LHZ_GRID_POINTS': ('grid_points', int),
    'LHZ_HISTOGRAM_BINS': ('histogram_bins', int),
    'LHZ_STREAM_SIZE': ('library_stream_size', int),
    'LHZ_OUT': ('output_dir', str),
    'LHZ_WORKERS': ('workers', int),
    'LHZ_DEBUG': ('debug', _parse_bool),
    'LHZ_TARGET_FIDELITY': ('dcrab.target_fidelity', float),
    'LHZ_SUPERITERATIONS': ('dcrab.n_superiterations', int),
    'LHZ_INNER_EVALS': ('dcrab.inner_max_evaluations', int),
    'LHZ_SUBSAMPLE': ('dcrab.objective_subsample', _parse_optional_int),
    'LHZ_DCRAB_SEED': ('dcrab.seed', int),
    'LHZ_MONOTONE': ('dcrab.enforce_monotone', _parse_bool),
    'LHZ_T_CAP': ('search.t_cap', float),
    'LHZ_F_MINUS': ('library.f_minus', float),
    'LHZ_F_PLUS': ('library.f_plus', float),
    'LHZ_SATURATION_WINDOW': ('library.saturation_window', int),
    'LHZ_MATCH_ORDER': ('library.match_order', str),
    'LHZ_STREAM_SEED': ('library.stream_seed', int),
    'LHZ_STEPS_PER_UNIT': ('evolution.steps_per_unit', float),
}


def _section_types() -> Dict[str, Any]:
    return {
        'dcrab': DcrabConfig,
        'search': TimeSearchConfig,
        'library': LibraryConfig,
        'evolution': EvolutionSettings,
    }


def _known_keys() -> set:
    keys = {f.name for f in fields(RunConfig) if f.name not in SECTIONS}
    for section, cls in _section_types().items():
        keys.update(f'{section}.{f.name}' for f in fields(cls))
    return keys


def _flatten(payload: Mapping[str, Any]) -> Dict[str, Any]:
    flat = {}
    for key, value in payload.items():
        if key in SECTIONS and isinstance(value, Mapping):
            for inner, inner_value in value.items():
                flat[f'{key}.{inner}'] = inner_value
        else:
            flat[key] = value
    return flat


def read_config_file(path: Path) -> Dict[str, Any]:
    """
    Read a JSON config file into dotted keys.

    Raises:
        ConfigError: On unreadable or malformed files
    """
    try:
        payload = json.loads(Path(path).read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise ConfigError([f'config file {path} not found'])
    except json.JSONDecodeError as e:
        raise ConfigError([f'{path}:{e.lineno}:{e.colno}: {e.msg}'])
    if not isinstance(payload, dict):
        raise ConfigError([f'{path}: expected a JSON object'])
    return _flatten(payload)


def _build(values: Mapping[str, Any]) -> RunConfig:
    top = {k: v for k, v in values.items() if '.' not in k}
    nested: Dict[str, Dict[str, Any]] = {section: {} for section in SECTIONS}
    for key, value in values.items():
        if '.' in key:
            section, name = key.split('.', 1)
            nested[section][name] = value
    sections = {section: cls(**nested[section]) for section, cls in _section_types().items()}
    return RunConfig(**top, **sections)


def load_config(
    profile: Optional[str] = None,
    config_path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Load configuration from profile, environment, config file and overrides.

    Args:
        profile: 'desk' or 'paper' (defaults to LHZ_PROFILE, then 'desk')
        config_path: Optional JSON config file
        overrides: Dotted-key values from CLI flags (None values ignored)
        environ: Environment mapping (defaults to os.environ)

    Returns:
        RunConfig: Validated immutable configuration

    Raises:
        ConfigError: Listing every invalid or unknown setting
    """
    environ = os.environ if environ is None else environ
    profile = profile or environ.get('LHZ_PROFILE', 'desk')
    if profile not in PROFILES:
        raise ConfigError([f'profile must be one of {", ".join(PROFILES)}, got {profile!r}'])

    problems: List[str] = []
    values: Dict[str, Any] = {'profile': profile, **PROFILES[profile]}

    for name, (key, convert) in ENV_FIELDS.items():
        raw = environ.get(name)
        if raw is None:
            continue
        try:
            values[key] = convert(raw)
        except ValueError as e:
            problems.append(f'{name}: {e}')

    if config_path is not None:
        values.update(read_config_file(config_path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    known = _known_keys()
    problems.extend(f'unknown setting {key!r}' for key in sorted(values) if key not in known)
    if problems:
        raise ConfigError(problems)

    values.setdefault('dcrab.seed', values.get('seed', 0))
    values.setdefault('library.stream_seed', values.get('seed', 0) + 1)

    try:
        cfg = _build(values)
        problems = validate_config(cfg)
    except (TypeError, ValueError) as e:
        raise ConfigError([f'wrong value type: {e}'])

    if problems:
        raise ConfigError(problems)
    return cfg


def validate_config(cfg: RunConfig) -> List[str]:
    """Return every violated setting (empty when the config is valid)."""
    problems = []

    if cfg.n_logical < 3:
        problems.append('n_logical must be at least 3')
    elif 2 ** n_pairs(cfg.n_logical) > MAX_SPECTRUM_DIM:
        problems.append(
            f'n_logical={cfg.n_logical} gives dimension 2^{n_pairs(cfg.n_logical)} '
            f'above the limit {MAX_SPECTRUM_DIM}'
        )
    for name in ('sample_size', 'n_groups', 'quota', 'test_quota', 'histogram_bins', 'library_stream_size', 'workers'):
        if getattr(cfg, name) < 1:
            problems.append(f'{name} must be positive')
    if cfg.seed < 0:
        problems.append('seed must be non-negative')
    if not 0.0 < cfg.train_fraction < 1.0:
        problems.append('train_fraction must lie in (0, 1)')
    elif cfg.n_groups >= 1 and cfg.quota >= 1:
        n_train = int(round(cfg.train_fraction * cfg.sample_size))
        if n_train < cfg.n_groups * cfg.quota:
            problems.append(
                f'sample_size={cfg.sample_size} leaves {n_train} training instances, '
                f'below n_groups * quota = {cfg.n_groups * cfg.quota}'
            )
    if cfg.balance_method not in BALANCE_METHODS:
        problems.append(f'balance_method must be one of {", ".join(BALANCE_METHODS)}')
    if not cfg.constraint_strength > 0:
        problems.append('constraint_strength must be positive')
    if cfg.coupling_mode not in COUPLING_MODES:
        problems.append(f'coupling_mode must be one of {", ".join(COUPLING_MODES)}')
    if cfg.grid_points < MIN_GRID_POINTS:
        problems.append(f'grid_points must be at least {MIN_GRID_POINTS}')
    if cfg.spectrum_levels < 2:
        problems.append('spectrum_levels must be at least 2')
    if not cfg.degeneracy_tolerance > 0:
        problems.append('degeneracy_tolerance must be positive')

    problems.extend(cfg.dcrab.problems())
    problems.extend(cfg.search.problems())
    problems.extend(cfg.library.problems())

    evolution = cfg.evolution
    if not evolution.steps_per_unit > 0 or evolution.min_steps < 1:
        problems.append('evolution step policy must be positive')
    if not evolution.drift_tolerance > 0:
        problems.append('evolution.drift_tolerance must be positive')
    if evolution.max_attempts < 1:
        problems.append('evolution.max_attempts must be positive')

    return problems
