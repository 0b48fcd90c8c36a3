"""Exception hierarchy.

``InputError`` subclasses indicate bad user input (CLI exit code 2);
``StatisticsError`` and ``SamplingError`` indicate a computation that
cannot produce a defined result on otherwise well-formed input.
"""


class TransferBenchError(Exception):
    pass


class InputError(TransferBenchError):
    """Malformed or invalid user-supplied data."""


class ParseError(InputError):
    """Unreadable row or field in a text input file."""


class FormatError(InputError):
    """Corrupt or truncated binary input file."""


class ValidationError(InputError):
    """Well-formed input violating a domain invariant."""


class NormalizationError(InputError):
    """A scorer x dataset group cannot be z-normalized."""


class StatisticsError(TransferBenchError):
    """A statistic is undefined on the given data."""


class SamplingError(TransferBenchError):
    """Posterior simulation failed; carries diagnostic details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
