"""Exception types shared across the package.

Every error raised deliberately by library code derives from
:class:`CollapsimError`, so callers (the CLI in particular) can map failure
classes onto exit codes without matching on message strings.
"""


class CollapsimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CollapsimError):
    """A configuration value or file is invalid."""


class DimensionError(CollapsimError):
    """Array shapes or index ranges are inconsistent."""


class InvalidStateError(CollapsimError):
    """A quantum state violates its invariants (e.g. zero or wrong norm)."""


class DegenerateTestError(CollapsimError):
    """A statistical test has no usable data after screening."""


class InsufficientDataError(CollapsimError):
    """Too few samples to run the requested procedure."""


class ConditioningError(CollapsimError):
    """Conditioning on an event of probability zero."""


class NoUniqueEquilibriumError(CollapsimError):
    """The Markov kernel has no unique attracting stationary distribution."""


class ResampleExhaustedError(CollapsimError):
    """Post-selection retained no trajectories within the sampling budget."""
