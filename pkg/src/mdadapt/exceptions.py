"""Exception types shared across the package.

Every error raised on purpose derives from :class:`MdadaptError` so the CLI
can map failures to exit codes (config/usage -> 2, runtime/numeric -> 3).
"""


class MdadaptError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MdadaptError):
    """Invalid or incomplete configuration (maps to CLI exit code 2)."""


class ShapeError(MdadaptError, ValueError):
    """Array dimensions do not match what the operation requires."""


class DegenerateInputError(MdadaptError, ValueError):
    """Input is numerically degenerate (e.g. zero-norm vector in cosine)."""


class InsufficientSamplesError(MdadaptError, ValueError):
    """Too few samples for the requested statistic (covariance needs >= 2)."""


class TooShortError(MdadaptError, ValueError):
    """Utterance has too few frames to sample two non-overlapping views."""


class InfeasibleBatchError(MdadaptError):
    """Corpus cannot supply a batch under the requested composition rules."""


class InfeasibleAnchorError(MdadaptError):
    """An anchor ended up with zero negatives; the loss is undefined for it."""


class UndefinedMetricError(MdadaptError, ValueError):
    """Metric needs both target and nontarget trials."""


class NonFiniteLossError(MdadaptError, ArithmeticError):
    """Training produced a NaN/Inf loss; the step is aborted."""
