"""Exception hierarchy shared by every module."""

from __future__ import annotations


class OasdError(Exception):
    """Base class; ``code`` is the machine-readable tag the CLI reports."""

    code = "error"


class ParseError(OasdError, ValueError):
    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(OasdError, ValueError):
    code = "validation_error"


class NotFoundError(OasdError, KeyError):
    code = "not_found"

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class GroupNotFoundError(NotFoundError):
    code = "group_not_found"


class ConfigError(OasdError, ValueError):
    code = "config_error"


class ShapeError(OasdError, ValueError):
    code = "shape_error"


class ContractViolation(OasdError, ValueError):
    code = "contract_violation"


class StreamError(OasdError, ValueError):
    code = "stream_error"
