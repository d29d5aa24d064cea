"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config errors exit 2, data errors 3,
training errors 4.
"""


class CostgatError(Exception):
    """Base class for all package errors."""


class ContractError(CostgatError):
    """A documented precondition was violated by the caller."""


class DimensionError(ContractError):
    """Operand shapes are incompatible; message names both shapes."""


class DomainError(ContractError):
    """A value lies outside an operation's mathematical domain."""


class DegenerateRowError(ContractError):
    """A softmax row has no unmasked entries."""


class DegenerateDistributionError(CostgatError):
    """A weight update produced an all-zero or non-finite distribution."""


class ConfigError(CostgatError):
    """A run configuration document is malformed or inconsistent."""


class IngestionError(CostgatError):
    """A dataset file failed to parse; message carries the offending row."""


class TrainingError(CostgatError):
    """Optimization diverged; message names the epoch."""


class CheckpointError(CostgatError):
    """A checkpoint is unreadable or incompatible with the given graph."""
