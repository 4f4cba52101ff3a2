from __future__ import annotations


class PrefSQAError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PrefSQAError, ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
