"""Exception hierarchy shared by the library and the CLI."""


class BlessKitError(Exception):
    """Base class for all errors raised by blesskit."""

    exit_code = 1


class InvalidArgumentError(BlessKitError, ValueError):
    exit_code = 2


class ResourceLimitError(BlessKitError):
    """An operation would exceed a configured size cap (e.g. the oracle cap)."""

    exit_code = 2


class DataFormatError(BlessKitError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(BlessKitError, ArithmeticError):
    """A factorization or iteration produced unusable (singular / non-finite) values."""

    exit_code = 4

    def __init__(self, message, jitters=None):
        super().__init__(message)
        self.jitters = list(jitters) if jitters is not None else []
