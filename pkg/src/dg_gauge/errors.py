"""Exception hierarchy shared by every module.

All library errors derive from :class:`DGGaugeError`, which the CLI maps to
exit code 1.
"""

from __future__ import annotations


class DGGaugeError(Exception):
    """Base class for validation and domain errors."""


class InvalidInput(DGGaugeError, ValueError):
    pass


class InsufficientEnvironments(InvalidInput):
    pass


class UndefinedCorrelation(DGGaugeError, ArithmeticError):
    pass


class GeneratorStarvation(DGGaugeError, RuntimeError):
    pass


class IncompleteMatrix(InvalidInput):
    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(f"({a}, {s}, {e})" for a, s, e in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" and {len(self.missing) - 10} more"
        super().__init__(f"missing records: {shown}{more}")


class ParseError(InvalidInput):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(ParseError):
    pass


class DuplicateRecord(ParseError):
    pass


class IoError(DGGaugeError, OSError):
    pass
