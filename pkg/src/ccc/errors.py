"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CCCError(Exception):
    exit_code = 1


class ValidationError(CCCError, ValueError):
    """Malformed or inconsistent input (shares not normalized, bad shapes)."""

    exit_code = 2


class DegenerateInputError(ValidationError):
    pass


class SchemaError(ValidationError):
    """A required row, column or class is missing from an input table."""


class DataIntegrityError(ValidationError):
    pass


class MappingError(ValidationError):
    pass


class InfeasibleError(CCCError):
    """Constraints that cannot be met by any assignment or selection."""

    exit_code = 3


class NumericalError(CCCError, FloatingPointError):
    pass


class UndefinedMetricError(CCCError):
    """A metric has no covered pixels to be computed over."""
