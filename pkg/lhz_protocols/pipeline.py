"""
Pipeline stages.

Each cmd_* verb reads the artifacts of earlier stages from the run
directory, writes its own, and returns the exit status 0. Failures raise
LhzError subclasses whose exit_code the CLI reports.
"""

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .cohort import (
    FilterPolicy,
    Grouping,
    build_cohort,
    compute_gap_summaries,
    filter_instances,
    final_state_verdict,
    gap_histogram,
    group_mean_gap_traces,
    manifest_records,
    sample_instances,
    sort_by_gap,
    split_train_test,
)
from .config import RunConfig
from .errors import HardnessError, MissingArtifactError
from .library import build_library, distinct_group_fraction
from .logging_config import get_logger
from .optimize import escalate_time, linear_required_time, speedup_report
from .physics.dynamics import instance_fidelities
from .physics.parity import LogicalInstance, PhysicalInstance, map_logical_to_physical
from .physics.schedule import Schedule, deserialize, linear_schedule
from .physics.spectrum import (
    GapSummary,
    gap_position_correlation,
    instantaneous_spectrum,
    multi_minimum_ratio,
    uniform_grid,
)
from .utils.cache import load_json, load_jsonl, save_csv, save_json, save_jsonl
from .utils.timing import format_duration

logger = get_logger(__name__)

STAGES = ('sample', 'spectra', 'group', 'optimize', 'evaluate', 'speedup', 'library')


@dataclass(frozen=True)
class RunPaths:
    """Artifact locations inside a run directory."""

    root: Path

    @property
    def log(self) -> Path:
        return self.root / 'run.log'

    @property
    def instances(self) -> Path:
        return self.root / 'instances.jsonl'

    @property
    def spectra(self) -> Path:
        return self.root / 'spectra.jsonl'

    @property
    def spectra_report(self) -> Path:
        return self.root / 'spectra_report.json'

    @property
    def spectrum_levels(self) -> Path:
        return self.root / 'spectrum_levels.csv'

    @property
    def manifest(self) -> Path:
        return self.root / 'cohort' / 'manifest.jsonl'

    @property
    def grouping(self) -> Path:
        return self.root / 'grouping.json'

    @property
    def histogram(self) -> Path:
        return self.root / 'gap_histogram.csv'

    @property
    def gap_traces(self) -> Path:
        return self.root / 'group_gap_traces.csv'

    def protocol(self, label: str) -> Path:
        return self.root / 'protocols' / f'{label}.json'

    @property
    def hard_instances(self) -> Path:
        return self.root / 'hard_instances.json'

    @property
    def protocol_shapes(self) -> Path:
        return self.root / 'protocol_shapes.csv'

    @property
    def fidelities(self) -> Path:
        return self.root / 'fidelities.csv'

    @property
    def group_fidelities(self) -> Path:
        return self.root / 'group_fidelities.csv'

    @property
    def linear_times(self) -> Path:
        return self.root / 'linear_times.json'

    @property
    def speedup(self) -> Path:
        return self.root / 'speedup.csv'

    @property
    def library(self) -> Path:
        return self.root / 'library.json'

    @property
    def library_growth(self) -> Path:
        return self.root / 'library_growth.csv'


def _summary_from_record(record: Dict[str, Any]) -> GapSummary:
    return GapSummary(
        min_gap=float(record['min_gap']),
        position=float(record['position']),
        local_minima_count=int(record['local_minima_count']),
        gap_trace=tuple(float(g) for g in record.get('gap_trace', ())),
    )


def _load_instances(paths: RunPaths) -> List[LogicalInstance]:
    return [LogicalInstance.from_dict(r) for r in load_jsonl(paths.instances, 'sample')]


def _load_groups(paths: RunPaths, split: str) -> Dict[str, List[LogicalInstance]]:
    """Group label -> members of one split, in manifest (gap) order."""
    grouping = load_json(paths.grouping, 'group')
    groups: Dict[str, List[LogicalInstance]] = {g['label']: [] for g in grouping['groups']}
    for record in load_jsonl(paths.manifest, 'group'):
        if record.get('split') == split and record.get('group') in groups:
            groups[record['group']].append(LogicalInstance.from_dict(record))
    return groups


def _physical(cfg: RunConfig, members: List[LogicalInstance]) -> List[PhysicalInstance]:
    return [map_logical_to_physical(inst, cfg.constraint_strength) for inst in members]


def _load_protocols(paths: RunPaths, labels: List[str]) -> Dict[str, Schedule]:
    protocols = {}
    for label in labels:
        path = paths.protocol(label)
        if path.exists():
            protocols[label] = deserialize(load_json(path, 'optimize')['protocol'])
    if not protocols:
        raise MissingArtifactError('optimize', str(paths.protocol(labels[0] if labels else 'g1')))
    return protocols


def cmd_sample(cfg: RunConfig, overwrite: bool = False) -> int:
    """Draw the instance sample."""
    paths = RunPaths(Path(cfg.output_dir))
    instances = sample_instances(cfg.sample_size, cfg.n_logical, cfg.seed)
    save_jsonl(paths.instances, (inst.to_dict() for inst in instances), cfg.provenance(), overwrite)
    logger.info(f'Sampled {len(instances)} instances with N={cfg.n_logical} (seed {cfg.seed})')
    return 0


def cmd_spectra(cfg: RunConfig, overwrite: bool = False) -> int:
    """Gap summaries of every sampled instance along the linear sweep."""
    paths = RunPaths(Path(cfg.output_dir))
    instances = _load_instances(paths)
    started = time.monotonic()

    summaries = compute_gap_summaries(
        instances,
        c=cfg.constraint_strength,
        coupling_mode=cfg.coupling_mode,
        m_points=cfg.grid_points,
        l_levels=cfg.spectrum_levels,
        workers=cfg.workers,
    )
    records = []
    for inst, summary in zip(instances, summaries):
        record = {'id': inst.instance_id, **summary.to_dict(), 'gap_trace': list(summary.gap_trace)}
        records.append(record)
    save_jsonl(paths.spectra, records, cfg.provenance(), overwrite)

    first = instances[0]
    trace = instantaneous_spectrum(
        map_logical_to_physical(first, cfg.constraint_strength),
        linear_schedule(1.0, c=cfg.constraint_strength, coupling_mode=cfg.coupling_mode),
        m_points=cfg.grid_points,
        l_levels=cfg.spectrum_levels,
    )
    save_csv(paths.spectrum_levels, trace.csv_header(), trace.csv_rows(), cfg.provenance(), overwrite)

    rho = gap_position_correlation(summaries)
    report = {
        'instances': len(summaries),
        'multi_minimum_ratio': multi_minimum_ratio(summaries),
        'gap_position_spearman': rho if math.isfinite(rho) else None,
        'mean_min_gap': math.fsum(s.min_gap for s in summaries) / len(summaries),
        'spectrum_levels_instance': first.instance_id,
    }
    save_json(paths.spectra_report, report, cfg.provenance(), overwrite)
    logger.info(
        f'Spectra done in {format_duration(time.monotonic() - started)}: '
        f'multi-minimum ratio {report["multi_minimum_ratio"]:.4f}'
    )
    return 0


def cmd_group(cfg: RunConfig, overwrite: bool = False) -> int:
    """Filter, sort, split and group the sample."""
    paths = RunPaths(Path(cfg.output_dir))
    instances = _load_instances(paths)
    spectra = {r['id']: _summary_from_record(r) for r in load_jsonl(paths.spectra, 'spectra')}
    missing = [inst.instance_id for inst in instances if inst.instance_id not in spectra]
    if missing:
        raise MissingArtifactError('spectra', f'{paths.spectra} (no entry for {missing[0]})')

    hard_ids = frozenset()
    if paths.hard_instances.exists():
        hard_ids = frozenset(load_json(paths.hard_instances, 'optimize').get('instance_ids', []))

    cohort = build_cohort(instances, [spectra[i.instance_id] for i in instances], cfg.seed)
    policy = FilterPolicy(cfg.degeneracy_tolerance, cfg.constraint_strength, hard_ids)
    cohort = sort_by_gap(filter_instances(cohort, policy, cfg.workers))

    split = split_train_test(
        cohort,
        n_groups=cfg.n_groups,
        quota=cfg.quota,
        test_quota=cfg.test_quota,
        seed=cfg.seed,
        train_fraction=cfg.train_fraction,
        method=cfg.balance_method,
    )
    grouping = split.grouping
    provenance = cfg.provenance()

    save_jsonl(paths.manifest, manifest_records(split), provenance, overwrite)

    summary = grouping.to_dict()
    for group, test_members in zip(summary['groups'], split.test_members):
        group['members'] = [split.train.entries[i].instance_id for i in group['members']]
        group['test_members'] = [split.test.entries[i].instance_id for i in test_members]
    save_json(paths.grouping, summary, provenance, overwrite)

    histogram = gap_histogram(split.train, grouping, cfg.histogram_bins)
    save_csv(paths.histogram, histogram.csv_header(), histogram.csv_rows(), provenance, overwrite)

    tau_grid, traces = group_mean_gap_traces(split.train, grouping)
    save_csv(
        paths.gap_traces,
        ['tau'] + grouping.labels,
        ([float(tau)] + [float(v) for v in traces[:, m]] for m, tau in enumerate(tau_grid)),
        provenance,
        overwrite,
    )

    logger.info(
        f'Grouped {len(split.train)} training / {len(split.test)} test instances into '
        f'{grouping.n_groups} groups ({len(cohort.filter_log)} discarded)'
    )
    return 0


def _mark_hard(cfg: RunConfig, group: List[PhysicalInstance]) -> List[str]:
    """Members the linear ramp cannot bring to the target even at the time cap."""
    at_cap = linear_schedule(cfg.search.t_cap, c=cfg.constraint_strength, coupling_mode=cfg.coupling_mode)
    values = instance_fidelities(at_cap, group, cfg.evolution, cfg.workers)
    return [phys.instance_id for phys, value in zip(group, values) if value < cfg.dcrab.target_fidelity]


def cmd_optimize(cfg: RunConfig, overwrite: bool = False) -> int:
    """Escalate and optimise one protocol per training group."""
    paths = RunPaths(Path(cfg.output_dir))
    groups = _load_groups(paths, 'train')
    provenance = cfg.provenance()
    hard: List[str] = []
    shapes: Dict[str, Schedule] = {}

    for g, (label, members) in enumerate(groups.items()):
        group = _physical(cfg, members)
        dcrab = replace(cfg.dcrab, seed=cfg.dcrab.seed + 1000 * g)
        started = time.monotonic()
        try:
            t_final, record = escalate_time(
                group, dcrab, cfg.search,
                settings=cfg.evolution,
                workers=cfg.workers,
                coupling_mode=cfg.coupling_mode,
            )
        except HardnessError as e:
            flagged = _mark_hard(cfg, group)
            hard.extend(flagged)
            logger.warning(f'{label}: {e}; {len(flagged)} hard member(s) removed')
            group = [phys for phys in group if phys.instance_id not in flagged]
            if not group:
                logger.warning(f'{label}: no members left, group has no protocol')
                continue
            try:
                t_final, record = escalate_time(
                    group, dcrab, cfg.search,
                    settings=cfg.evolution,
                    workers=cfg.workers,
                    coupling_mode=cfg.coupling_mode,
                )
            except HardnessError as retry_error:
                logger.warning(f'{label}: still unreachable ({retry_error}), group has no protocol')
                continue

        save_json(
            paths.protocol(label),
            {
                'group': label,
                'T': t_final,
                'protocol': record.best_schedule.to_dict(),
                'record': record.to_dict(),
                'members': [phys.instance_id for phys in group],
            },
            provenance,
            overwrite,
        )
        shapes[label] = record.best_schedule
        logger.info(
            f'{label}: T={t_final:.3f}, fidelity {record.final_objective:.4f} '
            f'({format_duration(time.monotonic() - started)})'
        )

    save_json(paths.hard_instances, {'instance_ids': sorted(hard)}, provenance, overwrite)

    grid = uniform_grid(cfg.grid_points)
    labels = list(groups)
    columns = {label: shapes[label].sample(grid) for label in labels if label in shapes}
    save_csv(
        paths.protocol_shapes,
        ['tau'] + labels,
        (
            [float(tau)] + [float(columns[label][m]) if label in columns else None for label in labels]
            for m, tau in enumerate(grid)
        ),
        provenance,
        overwrite,
    )
    return 0


def cmd_evaluate(cfg: RunConfig, overwrite: bool = False) -> int:
    """Single-instance and group fidelities of each protocol on train and test."""
    paths = RunPaths(Path(cfg.output_dir))
    train = _load_groups(paths, 'train')
    test = _load_groups(paths, 'test')
    protocols = _load_protocols(paths, list(train))

    instance_rows: List[List[Any]] = []
    group_rows: List[List[Any]] = []
    for label, protocol in protocols.items():
        ramp = linear_schedule(protocol.annealing_time, c=cfg.constraint_strength, coupling_mode=cfg.coupling_mode)
        means: Dict[str, Tuple[float, float]] = {}
        for split, members in (('train', train[label]), ('test', test.get(label, []))):
            if not members:
                continue
            group = _physical(cfg, members)
            optimized = instance_fidelities(protocol, group, cfg.evolution, cfg.workers)
            linear = instance_fidelities(ramp, group, cfg.evolution, cfg.workers)
            for inst, f_opt, f_lin in zip(members, optimized, linear):
                instance_rows.append([inst.instance_id, label, split, protocol.annealing_time, f_opt, f_lin])
            means[split] = (
                math.fsum(optimized) / len(optimized),
                math.fsum(linear) / len(linear),
            )

        train_mean, train_linear = means.get('train', (None, None))
        test_mean, test_linear = means.get('test', (None, None))
        difference = None if train_mean is None or test_mean is None else train_mean - test_mean
        group_rows.append([
            label, protocol.annealing_time, train_mean, test_mean,
            train_linear, test_linear, difference,
        ])
        logger.info(f'{label}: train {train_mean}, test {test_mean}')

    provenance = cfg.provenance()
    save_csv(
        paths.fidelities,
        ['instance_id', 'group', 'split', 'T', 'fidelity_optimized', 'fidelity_linear'],
        instance_rows,
        provenance,
        overwrite,
    )
    save_csv(
        paths.group_fidelities,
        ['group', 'T', 'train_mean', 'test_mean', 'train_linear_mean', 'test_linear_mean', 'train_minus_test'],
        group_rows,
        provenance,
        overwrite,
    )
    return 0


def cmd_speedup(cfg: RunConfig, overwrite: bool = False) -> int:
    """Linear-ramp required times and the per-group speed-up table."""
    paths = RunPaths(Path(cfg.output_dir))
    train = _load_groups(paths, 'train')
    labels = list(train)
    protocols = _load_protocols(paths, labels)
    optimized = {label: load_json(paths.protocol(label), 'optimize')['T'] for label in protocols}

    linear: Dict[str, float] = {}
    for label in labels:
        members = load_json(paths.protocol(label), 'optimize')['members'] if label in protocols else None
        group = [p for p in _physical(cfg, train[label]) if members is None or p.instance_id in members]
        try:
            linear[label] = linear_required_time(
                group,
                cfg.dcrab.target_fidelity,
                cfg.search,
                settings=cfg.evolution,
                workers=cfg.workers,
                coupling_mode=cfg.coupling_mode,
            )
        except HardnessError as e:
            logger.warning(f'{label}: linear ramp misses the target ({e})')

    report = speedup_report(labels, optimized, linear)
    provenance = cfg.provenance()
    save_json(paths.linear_times, {'linear_T': linear, 'optimized_T': optimized}, provenance, overwrite)
    save_csv(paths.speedup, report.csv_header(), report.csv_rows(), provenance, overwrite)
    if report.average_factor is not None:
        logger.info(
            f'Average speed-up {report.average_factor:.2f}x, '
            f'time reduction {100 * report.average_reduction:.1f}%'
        )
    return 0


def _parent_groups(cfg: RunConfig, paths: RunPaths, parents: List[LogicalInstance]) -> Optional[List[Optional[int]]]:
    if not paths.grouping.exists() or not parents:
        return None
    grouping_payload = load_json(paths.grouping, 'group')
    intervals = tuple((g['gap_min'], g['gap_max']) for g in grouping_payload['groups'])
    grouping = Grouping(
        bounds=tuple((g['start'], g['stop']) for g in grouping_payload['groups']),
        members=(),
        sigmas=(),
        trimmed_sigmas=(),
        intervals=intervals,
        quota=grouping_payload['quota'],
        baseline_sigmas=(),
    )
    summaries = compute_gap_summaries(
        parents,
        c=cfg.constraint_strength,
        coupling_mode=cfg.coupling_mode,
        m_points=cfg.grid_points,
        l_levels=cfg.spectrum_levels,
        workers=cfg.workers,
    )
    return [grouping.assign(s.min_gap) for s in summaries]


def cmd_library(cfg: RunConfig, overwrite: bool = False) -> int:
    """Grow the greedy protocol library over a fresh instance stream."""
    paths = RunPaths(Path(cfg.output_dir))
    stream = []
    for inst in sample_instances(cfg.library_stream_size, cfg.n_logical, cfg.library.stream_seed):
        reason = final_state_verdict(inst, FilterPolicy(cfg.degeneracy_tolerance, cfg.constraint_strength))
        if reason is None:
            stream.append(inst)
        else:
            logger.warning(f'Stream instance {inst.instance_id} skipped: {reason}')

    lib = build_library(
        stream,
        cfg.library,
        cfg.dcrab,
        cfg.search,
        c=cfg.constraint_strength,
        coupling_mode=cfg.coupling_mode,
        settings=cfg.evolution,
        workers=cfg.workers,
    )

    payload = lib.to_dict()
    by_id = {inst.instance_id: inst for inst in stream}
    parents = [by_id[entry.parent_id] for entry in lib.entries]
    groups = _parent_groups(cfg, paths, parents)
    payload['report'] = {
        'size': len(lib),
        'consumed': len(lib.growth_log),
        'hard': len(lib.hard_ids),
        'distinct_group_fraction': None if groups is None else distinct_group_fraction(groups),
    }

    provenance = cfg.provenance()
    save_json(paths.library, payload, provenance, overwrite)
    save_csv(paths.library_growth, lib.csv_header(), lib.csv_rows(), provenance, overwrite)
    logger.info(f'Library: {len(lib)} protocols over {len(stream)} instances, saturated={lib.saturated}')
    return 0


COMMANDS = {
    'sample': cmd_sample,
    'spectra': cmd_spectra,
    'group': cmd_group,
    'optimize': cmd_optimize,
    'evaluate': cmd_evaluate,
    'speedup': cmd_speedup,
    'library': cmd_library,
}
