"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``InputError`` (and its ``FormatError``
subclass) exit with 3, ``NumericalError`` with 4.
"""


class H2SError(Exception):
    """Base class for all package errors."""


class DomainError(H2SError, ValueError):
    """A density or conditional was evaluated outside its support."""


class InputError(H2SError, ValueError):
    """Invalid configuration, dataset or sampler arguments."""


class FormatError(InputError):
    """A persisted file (bank, chain, CSV) is malformed."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(H2SError, RuntimeError):
    """A sampler produced a non-finite value."""
