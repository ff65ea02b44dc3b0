"""
Greedy protocol library.

Consumes a stream of instances. An instance that one of the stored
protocols already solves to at least f_minus is consumed without growth;
otherwise a single-instance optimization escalated to f_plus adds a new
protocol. The library counts as saturated once a full window of
consecutive instances adds nothing.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from .errors import HardnessError
from .logging_config import get_logger
from .optimize import DcrabConfig, TimeSearchConfig, escalate_time
from .physics.dynamics import DEFAULT_SETTINGS, EvolutionSettings, evolve_with_retry
from .physics.parity import DEFAULT_CONSTRAINT_STRENGTH, LogicalInstance, PhysicalInstance, map_logical_to_physical
from .physics.schedule import Schedule, deserialize
from .workers import ordered_map

logger = get_logger(__name__)

MATCH_ORDERS = ('insertion', 'best')
NEW_PROTOCOL = 'new'
HARD_INSTANCE = 'hard'


@dataclass(frozen=True)
class LibraryConfig:
    f_minus: float = 0.66
    f_plus: float = 0.9
    saturation_window: int = 50
    stream_seed: int = 1
    match_order: str = 'insertion'

    def problems(self) -> List[str]:
        problems = []
        if not 0.0 < self.f_minus < self.f_plus < 1.0:
            problems.append('library: thresholds must satisfy 0 < f_minus < f_plus < 1')
        if self.saturation_window < 1:
            problems.append('library.saturation_window must be positive')
        if self.match_order not in MATCH_ORDERS:
            problems.append(f'library.match_order must be one of {", ".join(MATCH_ORDERS)}')
        return problems

    def to_dict(self) -> Dict[str, Any]:
        return {
            'f_minus': self.f_minus,
            'f_plus': self.f_plus,
            'saturation_window': self.saturation_window,
            'stream_seed': self.stream_seed,
            'match_order': self.match_order,
        }


@dataclass(frozen=True)
class LibraryEntry:
    schedule: Schedule
    parent_id: str

    @property
    def annealing_time(self) -> float:
        return self.schedule.annealing_time


@dataclass(frozen=True)
class GrowthStep:
    """Decision for one consumed instance: matched entry index, 'new' or 'hard'."""

    instance_id: str
    decision: Union[int, str]
    fidelity: Optional[float]
    library_size: int


@dataclass
class ProtocolLibrary:
    config: LibraryConfig = field(default_factory=LibraryConfig)
    entries: List[LibraryEntry] = field(default_factory=list)
    growth_log: List[GrowthStep] = field(default_factory=list)
    saturated: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def hard_ids(self) -> List[str]:
        return [step.instance_id for step in self.growth_log if step.decision == HARD_INSTANCE]

    def growth_curve(self) -> List[int]:
        return [step.library_size for step in self.growth_log]

    def csv_header(self) -> List[str]:
        return ['position', 'instance_id', 'decision', 'fidelity', 'library_size']

    def csv_rows(self) -> List[List[Any]]:
        return [
            [n, step.instance_id, step.decision, step.fidelity, step.library_size]
            for n, step in enumerate(self.growth_log)
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'config': self.config.to_dict(),
            'entries': [
                {'protocol': e.schedule.to_dict(), 'T': e.annealing_time, 'parent_id': e.parent_id}
                for e in self.entries
            ],
            'growth_log': [
                {
                    'instance_id': s.instance_id,
                    'decision': s.decision,
                    'fidelity': s.fidelity,
                    'library_size': s.library_size,
                }
                for s in self.growth_log
            ],
            'saturated': self.saturated,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'ProtocolLibrary':
        config = LibraryConfig(**payload.get('config', {}))
        entries = [
            LibraryEntry(deserialize(e['protocol']), str(e['parent_id']))
            for e in payload.get('entries', [])
        ]
        growth = [
            GrowthStep(s['instance_id'], s['decision'], s['fidelity'], int(s['library_size']))
            for s in payload.get('growth_log', [])
        ]
        return cls(config, entries, growth, bool(payload.get('saturated', False)))


@dataclass(frozen=True)
class MatchResult:
    index: Optional[int]
    fidelities: Tuple[float, ...]

    @property
    def matched(self) -> bool:
        return self.index is not None


def _entry_fidelity(task: Tuple[PhysicalInstance, Schedule, EvolutionSettings]) -> float:
    phys, schedule, settings = task
    return evolve_with_retry(phys, schedule, settings).fidelity


def _pick(fidelities: Sequence[float], threshold: float, match_order: str) -> Optional[int]:
    if match_order == 'best':
        if not fidelities:
            return None
        best = max(range(len(fidelities)), key=lambda n: (fidelities[n], -n))
        return best if fidelities[best] >= threshold else None
    for n, value in enumerate(fidelities):
        if value >= threshold:
            return n
    return None


def classify_instance(
    inst: LogicalInstance,
    lib: ProtocolLibrary,
    threshold: float,
    c: float = DEFAULT_CONSTRAINT_STRENGTH,
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    match_order: str = 'insertion',
) -> MatchResult:
    """
    Fidelity of every library protocol on an instance and the matching entry
    (first in insertion order, or the best one) reaching the threshold.
    """
    if not lib.entries:
        raise ValueError('classify_instance needs a non-empty library')
    phys = map_logical_to_physical(inst, c)
    fidelities = ordered_map(
        _entry_fidelity,
        [(phys, entry.schedule, settings) for entry in lib.entries],
        workers,
    )
    return MatchResult(_pick(fidelities, threshold, match_order), tuple(fidelities))


def build_library(
    stream: Sequence[LogicalInstance],
    cfg: LibraryConfig = LibraryConfig(),
    opt_cfg: DcrabConfig = DcrabConfig(),
    search: TimeSearchConfig = TimeSearchConfig(),
    c: float = DEFAULT_CONSTRAINT_STRENGTH,
    coupling_mode: str = 'decoupled',
    settings: EvolutionSettings = DEFAULT_SETTINGS,
    workers: int = 1,
    on_step: Optional[Callable[[int, GrowthStep], None]] = None,
) -> ProtocolLibrary:
    """
    Grow a protocol library greedily over an instance stream.

    Args:
        stream: Instances in consumption order
        cfg: Thresholds, saturation window and match order
        opt_cfg: dCRAB settings of the single-instance optimizations
        search: Annealing-time grid
        c: Constraint strength
        coupling_mode: Constraint coupling of new protocols
        settings: Integrator policy
        workers: Parallel evaluations across library entries
        on_step: Progress callback (position, step)

    Returns:
        ProtocolLibrary
    """
    if not stream:
        raise ValueError('build_library needs a non-empty stream')

    lib = ProtocolLibrary(config=cfg)
    quiet = 0
    single_cfg = replace(opt_cfg, target_fidelity=cfg.f_plus)

    for position, inst in enumerate(stream):
        phys = map_logical_to_physical(inst, c)
        step = None

        if lib.entries:
            match = classify_instance(
                inst, lib, cfg.f_minus, c, settings, workers, cfg.match_order,
            )
            if match.matched:
                step = GrowthStep(inst.instance_id, match.index, match.fidelities[match.index], len(lib))

        if step is None:
            try:
                _, record = escalate_time(
                    [phys],
                    replace(single_cfg, seed=opt_cfg.seed + position),
                    search,
                    settings=settings,
                    coupling_mode=coupling_mode,
                )
            except HardnessError as e:
                logger.warning(f'{inst.instance_id}: hard instance skipped ({e})')
                step = GrowthStep(inst.instance_id, HARD_INSTANCE, e.best_fidelity, len(lib))
            else:
                lib.entries.append(LibraryEntry(record.best_schedule, inst.instance_id))
                step = GrowthStep(inst.instance_id, NEW_PROTOCOL, record.final_objective, len(lib))
                logger.info(
                    f'Library grew to {len(lib)} protocols at instance {position} '
                    f'(T={record.best_schedule.annealing_time:.3f})'
                )

        lib.growth_log.append(step)
        quiet = 0 if step.decision == NEW_PROTOCOL else quiet + 1
        if quiet >= cfg.saturation_window and not lib.saturated:
            lib.saturated = True
            logger.info(f'Library saturated at {len(lib)} protocols after {position + 1} instances')
        if on_step is not None:
            on_step(position, step)

    return lib


def distinct_group_fraction(parent_groups: Sequence[Optional[int]]) -> float:
    """Share of library entries whose parent lands in a group no earlier entry used."""
    if not parent_groups:
        return 0.0
    seen = set()
    distinct = 0
    for group in parent_groups:
        if group is not None and group not in seen:
            distinct += 1
        if group is not None:
            seen.add(group)
    return distinct / len(parent_groups)
