"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


class QdfoError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(QdfoError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}")


class UnsupportedConstruct(ParseError):
    def __init__(self, construct: str, line: int = 0, col: int = 0):
        self.construct = construct
        super().__init__(f"unsupported construct: {construct}", line, col)


class DanglingValue(QdfoError):
    pass


class DifferentFunctions(QdfoError):
    pass


class TypeMismatch(QdfoError):
    pass


class DominanceViolation(QdfoError):
    def __init__(self, message: str, use_site=None):
        self.use_site = use_site
        super().__init__(message)


class ZeroStep(QdfoError):
    pass


class ExternalOptFailed(QdfoError):
    def __init__(self, exit_code: int, stderr: str):
        self.exit_code = exit_code
        self.stderr = stderr
        super().__init__(f"external optimizer exited with {exit_code}: {stderr.strip()[:400]}")


class FixpointNotReached(QdfoError):
    def __init__(self, bound: int):
        self.bound = bound
        super().__init__(f"workflow did not reach a fixpoint within {bound} iterations")


class PassInvariantBroken(QdfoError):
    """A pass left the module failing validation."""

    def __init__(self, stage: str, diagnostics: list):
        self.stage = stage
        self.diagnostics = diagnostics
        first = diagnostics[0] if diagnostics else "unknown"
        super().__init__(f"module invalid after {stage}: {first}")


class StepBudgetExceeded(QdfoError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"interpreter step budget of {budget} exceeded")


class UnknownRuntimeFunction(QdfoError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown runtime function: {name}")


class InvalidSpec(QdfoError):
    pass


class SchemaError(QdfoError):
    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class UnknownCorpusName(QdfoError):
    pass


@dataclass
class Diagnostic:
    """A non-fatal finding attached to a location."""

    code: str
    message: str
    function: Optional[str] = None
    location: Optional[str] = None

    def __str__(self) -> str:
        where = ""
        if self.function:
            where = f"@{self.function}"
            if self.location:
                where += f" {self.location}"
            where += ": "
        return f"{where}{self.code}: {self.message}"
