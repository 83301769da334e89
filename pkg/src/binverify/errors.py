"""Exception hierarchy shared by every module."""

from __future__ import annotations


class BinVerifyError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BinVerifyError, ValueError):
    """An argument violates a documented precondition."""


class ContractViolationError(BinVerifyError):
    """Two inputs that must agree with each other do not (e.g. pattern vs shortlist)."""


class ConfigurationError(BinVerifyError):
    """A backend or run is mis-configured (missing fixture, unsupported mode, ...)."""


class BackendError(BinVerifyError):
    """A verifier backend failed to produce an answer.

    ``attempts`` is how many transport attempts were made and ``trace`` holds
    whatever protocol trace was collected before the failure.
    """

    def __init__(self, message: str, *, attempts: int = 1, trace: list | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.trace = trace if trace is not None else []


class UnparseableAnswerError(BinVerifyError):
    """A multiple-choice reply could not be mapped to an option."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class UndefinedThresholdError(BinVerifyError, ZeroDivisionError):
    """The MCQ/binary crossover threshold has a zero denominator."""


class ManifestError(BinVerifyError):
    """A manifest line failed schema validation."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
