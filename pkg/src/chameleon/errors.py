"""Exception hierarchy.

Everything raised on purpose by this package derives from :class:`ChameleonError`.
Subclasses of :class:`ValidationError` map to CLI exit code 1; everything
else maps to exit code 2.
"""

from __future__ import annotations


class ChameleonError(Exception):
    """Base class for all package errors."""


class ValidationError(ChameleonError, ValueError):
    """Bad input supplied by the caller (config, flags, arguments)."""


class ConfigError(ValidationError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class DomainError(ValidationError):
    """Argument outside the mathematical domain of an operation."""


class ArgumentError(ValidationError):
    """Non-finite or out-of-range numeric argument."""


class ScheduleError(ValidationError):
    """Trial index not covered by an angle schedule."""


class EvaluationError(ChameleonError, ArithmeticError):
    """An integrand produced a non-finite value."""


class QuadratureError(ChameleonError, ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""


class RecordParseError(ChameleonError, ValueError):
    """Malformed record file line."""

    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class IntegrityError(ChameleonError):
    """Artifacts are inconsistent (hash mismatch, bad ordering, wrong count)."""


class PairingError(ChameleonError, ValueError):
    """Station records do not share the same trial indices."""


class InsufficientDataError(ChameleonError, ValueError):
    """Selection contains no trials."""


class GroupingError(ChameleonError, ValueError):
    """Selection mixes several settings for one station."""


class ProtocolError(ChameleonError):
    """Wire protocol violation (bad frame, unexpected message, version)."""


class RunAborted(ChameleonError):
    """A coordinated run was aborted; ``artifacts`` holds whatever was written."""

    def __init__(self, reason: str, artifacts=None):
        self.reason = reason
        self.artifacts = artifacts
        super().__init__(f"run aborted: {reason}")
