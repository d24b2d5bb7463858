"""Exception types shared across the package.

The CLI maps these onto stable exit codes (see ``amcen.cli``).
"""


class AmcenError(Exception):
    """Base class for all package-specific errors."""


class UsageError(AmcenError):
    """Bad command invocation: missing inputs or unusable arguments."""


class DataError(AmcenError):
    """Malformed input files, invalid ids, or violated dataset invariants."""


class SequencingError(AmcenError):
    """History snapshots absorbed out of chronological order."""


class StalenessError(AmcenError):
    """History queried past the absorbed frontier."""


class CheckpointError(AmcenError):
    """Checkpoint integrity or config-fingerprint failure."""


class TrainingError(AmcenError):
    """Non-finite losses or violated training contracts (e.g. freezing)."""
