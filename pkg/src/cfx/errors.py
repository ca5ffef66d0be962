"""Exception types shared across the package."""


class CfxError(Exception):
    """Base class for all package errors."""


class InputShapeError(CfxError):
    """An input vector does not match the expected dimension."""


class ModelFormatError(CfxError):
    """A network document is malformed or violates a structural invariant."""


class SchemaError(CfxError):
    """A feature schema document is malformed or self-inconsistent."""


class PlausibilityError(CfxError):
    """A point cannot be decoded because it violates encoding invariants."""


class UnsupportedNormError(CfxError):
    """The requested norm is not supported on this code path."""


class InfeasibleRegionError(CfxError):
    """A constraint system admits no feasible point."""


class SolverNumericalError(CfxError):
    """The LP solver failed to converge after refactorization retries."""


class GridCapError(CfxError):
    """A brute-force grid would exceed the configured enumeration cap."""


class MetricUndefinedError(CfxError):
    """Too few results to compute the requested aggregate metric."""


class LpFormatError(CfxError):
    """An LP-format document cannot be parsed."""


class ConfigError(CfxError):
    """Invalid command-line or run configuration."""
