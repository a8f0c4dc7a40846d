import re
from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Loc:
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class FJError(Exception):
    """Base class for every error raised by the checkers and the front end."""


class ParseError(FJError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.message}"

    def __reduce__(self):
        return (ParseError, (self.message, self.line, self.column))


class ClassTableError(FJError):
    pass


class FJTypeError(FJError):
    """
    A typing rule violation.

    Args:
        rule: Name of the violated rule, e.g. "T-Invk" or "TC-Program"
        message: Human readable description
        loc: Source location of the offending node, if known
    """

    def __init__(self, rule: str, message: str, loc: Optional[Loc] = None):
        super().__init__(message)
        self.rule = rule
        self.message = message
        self.loc = loc

    def __str__(self) -> str:
        where = f"{self.loc}: " if self.loc else ""
        return f"{where}{self.rule}: {self.message}"

    def __eq__(self, other):
        if not isinstance(other, FJTypeError):
            return NotImplemented
        return (self.rule, self.message, self.loc) == (other.rule, other.message, other.loc)

    def __hash__(self):
        return hash((self.rule, self.message, self.loc))

    def __reduce__(self):
        return (FJTypeError, (self.rule, self.message, self.loc))


_VAR_NAME = re.compile(r"\?\d+")


@dataclass
class Verdict:
    ok: bool
    errors: list[FJTypeError] = field(default_factory=list)

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(True, [])

    @classmethod
    def reject(cls, errors: list[FJTypeError]) -> "Verdict":
        return cls(False, list(errors))

    def rules(self) -> list[str]:
        return sorted(e.rule for e in self.errors)

    def signature(self) -> tuple:
        """Session independent summary: class variable names are blanked out."""
        return (self.ok, tuple(sorted(
            (e.rule, _VAR_NAME.sub("?", e.message)) for e in self.errors
        )))
