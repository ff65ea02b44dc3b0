"""
Exception hierarchy for the LHZ protocol workbench.

Every error carries the CLI exit code it maps to:
1 validation, 2 missing artifact, 3 numerical failure.

Errors with extra constructor arguments define __reduce__ so they survive
the trip back from a worker process.
"""

from typing import Iterable, List, Optional, Sequence


class LhzError(Exception):
    """Base class for all workbench errors."""

    exit_code = 1


class InvalidInstanceError(LhzError, ValueError):
    """Instance cannot be mapped or is malformed."""


class DomainError(LhzError, ValueError):
    """Argument outside its mathematical domain (e.g. s or tau not in [0, 1])."""


class EnumerationLimitError(LhzError, ValueError):
    """Brute-force enumeration refused because the system is too large."""


class DimensionLimitError(LhzError, ValueError):
    """Hilbert-space dimension exceeds the desk-scale guard."""


class ProtocolFormatError(LhzError, ValueError):
    """Malformed protocol file; `location` is a dotted path into the document."""

    def __init__(self, location: str, message: str):
        super().__init__(f'{location}: {message}')
        self.location = location
        self.message = message

    def __reduce__(self):
        return type(self), (self.location, self.message)


class ConfigError(LhzError, ValueError):
    """Configuration validation failed; `problems` lists every violated field."""

    def __init__(self, problems: Sequence[str]):
        self.problems: List[str] = list(problems)
        super().__init__('Invalid configuration: ' + '; '.join(self.problems))

    def __reduce__(self):
        return type(self), (self.problems,)


class InfeasibleQuotaError(LhzError, ValueError):
    """A group cannot supply the requested quota."""

    def __init__(self, group_index: int, size: int, quota: int):
        super().__init__(
            f'Group {group_index} holds {size} instances, quota {quota} is infeasible'
        )
        self.group_index = group_index
        self.size = size
        self.quota = quota

    def __reduce__(self):
        return type(self), (self.group_index, self.size, self.quota)


class EmptyTestGroupError(LhzError, ValueError):
    """No test instance fell into a training interval."""

    def __init__(self, group_index: int):
        super().__init__(
            f'Test group {group_index} is empty; increase the sample size'
        )
        self.group_index = group_index

    def __reduce__(self):
        return type(self), (self.group_index,)


class ArtifactExistsError(LhzError):
    """Refusing to overwrite an existing artifact without --overwrite."""


class MissingArtifactError(LhzError):
    """A prerequisite pipeline stage has not produced its artifact."""

    exit_code = 2

    def __init__(self, stage: str, path: str):
        super().__init__(f'Missing artifact {path}; run the "{stage}" stage first')
        self.stage = stage
        self.path = path

    def __reduce__(self):
        return type(self), (self.stage, self.path)


class NumericalError(LhzError, RuntimeError):
    """Base class for numerical failures."""

    exit_code = 3


class SpectrumError(NumericalError):
    """Eigensolver failed at a grid point."""

    def __init__(self, tau: float, message: str):
        super().__init__(f'Eigensolver failed at tau={tau:.6f}: {message}')
        self.tau = tau
        self.message = message

    def __reduce__(self):
        return type(self), (self.tau, self.message)


class IntegrationError(NumericalError):
    """Time integration lost unitarity beyond tolerance."""

    def __init__(self, norm_drift: float, steps: int, instance_id: Optional[str] = None):
        where = f' for {instance_id}' if instance_id else ''
        super().__init__(
            f'Norm drift {norm_drift:.3e} with {steps} steps{where}'
        )
        self.norm_drift = norm_drift
        self.steps = steps
        self.instance_id = instance_id

    def __reduce__(self):
        return type(self), (self.norm_drift, self.steps, self.instance_id)


class GroupEvaluationError(NumericalError):
    """One or more group members failed to evolve."""

    def __init__(self, failing_ids: Iterable[str]):
        self.failing_ids: List[str] = list(failing_ids)
        super().__init__(
            f'Evolution failed for {len(self.failing_ids)} instance(s): '
            + ', '.join(self.failing_ids)
        )

    def __reduce__(self):
        return type(self), (self.failing_ids,)


class HardnessError(NumericalError):
    """Target fidelity not reached before the annealing-time cap."""

    def __init__(self, t_cap: float, instance_ids: Iterable[str], best_fidelity: float = 0.0):
        self.t_cap = t_cap
        self.instance_ids: List[str] = list(instance_ids)
        self.best_fidelity = best_fidelity
        super().__init__(
            f'Target fidelity not reached below T={t_cap:g} '
            f'(best {best_fidelity:.4f}, {len(self.instance_ids)} instance(s))'
        )

    def __reduce__(self):
        return type(self), (self.t_cap, self.instance_ids, self.best_fidelity)
