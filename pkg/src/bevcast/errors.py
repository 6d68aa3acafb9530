"""Exception taxonomy shared across the pipeline.

Exit-code mapping for the CLI: usage errors exit 1, ``PipelineError``
subclasses exit with their ``exit_code`` (2 for data/format problems,
3 for numeric failures).
"""


class PipelineError(Exception):
    exit_code = 2


class FormatError(PipelineError):
    """Malformed input file (missing column, corrupt record, bad header)."""


class IntegrityError(PipelineError):
    """Input parsed but violates a structural guarantee (frame gaps, missing TV)."""


class GenerationError(PipelineError):
    """Synthetic scene cannot be generated (infeasible packing)."""


class RangeError(PipelineError):
    """Requested frame range is not covered by the track."""


class SplitError(PipelineError):
    """Corpus too small to honor the split ratios."""


class ShapeError(PipelineError):
    """Array does not have the canonical shape required by an operation."""


class CheckpointError(PipelineError):
    """Checkpoint file is truncated, corrupt, or has the wrong version."""


class EvaluationError(PipelineError):
    """Evaluation requested on an empty window set."""


class ConfigError(PipelineError):
    """Invalid configuration value or unusable dataset layout."""


class DomainError(PipelineError):
    """Distribution parameters outside their valid domain."""
    exit_code = 3


class NumericError(PipelineError):
    """Non-finite value encountered where a finite one is required."""
    exit_code = 3
