"""Exception types.

Input problems (bad files, schema mismatches, violated preconditions) raise
:class:`InputError`; linear-algebra failures raise :class:`NumericalError`.
The CLI maps them to exit codes 1 and 2.
"""


class WasabiError(Exception):
    """Base class for all package errors."""


class InputError(WasabiError, ValueError):
    pass


class NumericalError(WasabiError, ArithmeticError):
    pass


class NotPSDError(NumericalError):
    """Matrix has an eigenvalue below the clamping tolerance."""
