"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, dimension mismatch, or out-of-range query."""


class DegenerateInputError(ValueError):
    """Input too small or empty for the requested operation."""


class DegenerateGroupError(DegenerateInputError):
    """A protected group (or required label cell) is missing from a batch."""


class IngestionError(ValueError):
    """Malformed external data file."""


class NumericalFailureError(RuntimeError):
    """A non-finite value appeared during optimization."""


class InternalConsistencyError(RuntimeError):
    """An invariant the expert pool relies on was violated."""
