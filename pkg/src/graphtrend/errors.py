"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``code`` so the CLI can emit
one-line diagnostics and scripts can branch on failure kind.
"""


class GraphtrendError(Exception):
    """Base class for all package errors."""

    code = "ERROR"


class ConfigError(GraphtrendError):
    code = "CONFIG"


class ParseError(GraphtrendError):
    """Malformed input file (names the offending line where possible)."""

    code = "PARSE"


class DataError(GraphtrendError):
    """Input data violates a panel invariant (bad close price, etc.)."""

    code = "DATA"


class InsufficientHistoryError(DataError):
    code = "INSUFFICIENT_HISTORY"


class SyntheticSpecError(ConfigError):
    code = "SYNTH_SPEC"


class CheckpointError(GraphtrendError):
    """Checkpoint file is corrupt, truncated, or version-incompatible."""

    code = "CHECKPOINT"


class TrainingDivergedError(GraphtrendError):
    code = "DIVERGED"
