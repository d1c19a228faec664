"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical problems exit 3.
"""


class GlassforestError(Exception):
    """Base class for package errors."""


class UsageError(GlassforestError):
    """Bad invocation: unknown flags, malformed flag values, missing arguments."""


class DataError(GlassforestError):
    """Malformed input data, schema mismatches, or missing/incompatible artifacts."""


class NumericError(GlassforestError):
    """Numerical failure: degenerate inputs, singular designs, undefined estimands."""
