"""Source spans, diagnostics and the exception hierarchy.

Every user-facing failure of the parser and the checkers is a
:class:`Diagnostic` carrying a code from the closed :class:`DiagnosticCode`
catalog. Exceptions are reserved for malformed input to the pure helpers and
for internal invariant traps.
"""

from dataclasses import dataclass, field
from enum import StrEnum


class Taxonomy(StrEnum):
    """Kinds of error the type-safety guarantee rules out."""

    METHOD_NOT_UNDERSTOOD = "Method not understood"
    FIELD_NOT_UNDERSTOOD = "Field not understood"
    METHOD_NOT_AVAILABLE = "Method not available"
    FIELD_NOT_AVAILABLE = "Field not available"
    PARAMETER_NOT_AVAILABLE = "Parameter not available"
    FIELD_MISUSED = "Field misused"
    PARAMETER_MISUSED = "Parameter misused"


class Severity(StrEnum):
    """Diagnostic severity."""

    ERROR = "error"
    WARNING = "warning"
    NOTE = "note"


class DiagnosticCode(StrEnum):
    """Closed catalog of diagnostic codes."""

    # syntax and structure
    SYNTAX_ERROR = "SyntaxError"
    MISSING_MAIN_CLASS = "MissingMainClass"
    INVALID_MAIN = "InvalidMain"
    DUPLICATE_NAME = "DuplicateName"
    UNDECLARED_NAME = "UndeclaredName"
    EMPTY_ENUM = "EmptyEnum"
    ENUM_FIELD = "EnumField"
    ARITY_MISMATCH = "ArityMismatch"
    UNDECLARED_METHOD_IN_USAGE = "UndeclaredMethodInUsage"
    UNBOUND_USAGE_VARIABLE = "UnboundUsageVariable"
    UNFOLD_CYCLE = "UnfoldCycle"
    INVALID_CHOICE = "InvalidChoice"
    UNDECLARED_LOOP_LABEL = "UndeclaredLoopLabel"
    DUPLICATE_LOOP_LABEL = "DuplicateLoopLabel"
    IO_ERROR = "IoError"

    # typing
    METHOD_NOT_UNDERSTOOD = "MethodNotUnderstood"
    FIELD_NOT_UNDERSTOOD = "FieldNotUnderstood"
    METHOD_NOT_AVAILABLE = "MethodNotAvailable"
    FIELD_NOT_AVAILABLE = "FieldNotAvailable"
    PARAMETER_NOT_AVAILABLE = "ParameterNotAvailable"
    FIELD_MISUSED = "FieldMisused"
    PARAMETER_MISUSED = "ParameterMisused"
    BRANCH_MISMATCH = "BranchMismatch"
    LOOP_ENV_MISMATCH = "LoopEnvMismatch"
    SWITCH_LABEL_MISMATCH = "SwitchLabelMismatch"
    NON_TERMINATED_AFTER_USAGE = "NonTerminatedAfterUsage"
    EMPTY_BRANCH = "EmptyBranch"
    TYPE_MISMATCH = "TypeMismatch"
    USAGE_RECURSION_MISMATCH = "UsageRecursionMismatch"

    # configuration typing
    WELL_TYPED_HEAP = "WellTypedHeap"
    WELL_TYPED_STACK = "WellTypedStack"
    WELL_TYPED_OBJECTS = "WellTypedObjects"
    WELL_TYPED_EXPRESSION = "WellTypedExpression"
    WELL_TYPED_DECLARATIONS = "WellTypedDeclarations"

    @property
    def taxonomy(self) -> Taxonomy | None:
        """The error kind this code reports, if it is one of the guarded kinds."""
        return _TAXONOMY.get(self)


_TAXONOMY: dict[DiagnosticCode, Taxonomy] = {
    DiagnosticCode.METHOD_NOT_UNDERSTOOD: Taxonomy.METHOD_NOT_UNDERSTOOD,
    DiagnosticCode.FIELD_NOT_UNDERSTOOD: Taxonomy.FIELD_NOT_UNDERSTOOD,
    DiagnosticCode.METHOD_NOT_AVAILABLE: Taxonomy.METHOD_NOT_AVAILABLE,
    DiagnosticCode.FIELD_NOT_AVAILABLE: Taxonomy.FIELD_NOT_AVAILABLE,
    DiagnosticCode.PARAMETER_NOT_AVAILABLE: Taxonomy.PARAMETER_NOT_AVAILABLE,
    DiagnosticCode.FIELD_MISUSED: Taxonomy.FIELD_MISUSED,
    DiagnosticCode.PARAMETER_MISUSED: Taxonomy.PARAMETER_MISUSED,
}

# Codes reported by the parser rather than the checker
STRUCTURAL_CODES: frozenset[DiagnosticCode] = frozenset(
    {
        DiagnosticCode.SYNTAX_ERROR,
        DiagnosticCode.MISSING_MAIN_CLASS,
        DiagnosticCode.INVALID_MAIN,
        DiagnosticCode.DUPLICATE_NAME,
        DiagnosticCode.UNDECLARED_NAME,
        DiagnosticCode.EMPTY_ENUM,
        DiagnosticCode.ENUM_FIELD,
        DiagnosticCode.ARITY_MISMATCH,
        DiagnosticCode.UNDECLARED_METHOD_IN_USAGE,
        DiagnosticCode.UNBOUND_USAGE_VARIABLE,
        DiagnosticCode.UNFOLD_CYCLE,
        DiagnosticCode.INVALID_CHOICE,
        DiagnosticCode.UNDECLARED_LOOP_LABEL,
        DiagnosticCode.DUPLICATE_LOOP_LABEL,
        DiagnosticCode.IO_ERROR,
    }
)


@dataclass(frozen=True, order=True)
class SourceSpan:
    """A region of source text, 1-based and inclusive of the start.

    Attributes:
        file: Name of the source file, or ``<input>``
        start_line: Line of the first character
        start_col: Column of the first character
        end_line: Line just past the region
        end_col: Column just past the region
    """

    file: str
    start_line: int
    start_col: int
    end_line: int
    end_col: int

    def __post_init__(self) -> None:
        """Validate that the span does not run backwards."""
        if (self.end_line, self.end_col) < (self.start_line, self.start_col):
            raise ValueError("span end precedes span start")

    def cover(self, other: "SourceSpan") -> "SourceSpan":
        """Smallest span containing both spans."""
        start = min((self.start_line, self.start_col), (other.start_line, other.start_col))
        end = max((self.end_line, self.end_col), (other.end_line, other.end_col))
        return SourceSpan(self.file, start[0], start[1], end[0], end[1])

    def __str__(self) -> str:
        return f"{self.file}:{self.start_line}:{self.start_col}"


@dataclass(frozen=True)
class Diagnostic:
    """A single report from the parser or a checker.

    Attributes:
        severity: How serious the report is
        code: Catalog code
        message: Human-readable description
        span: Where in the source the problem was found, if known
        notes: Extra lines of context
    """

    severity: Severity
    code: DiagnosticCode
    message: str
    span: SourceSpan | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def error(
        cls,
        code: DiagnosticCode,
        message: str,
        span: SourceSpan | None = None,
        *notes: str,
    ) -> "Diagnostic":
        """Shorthand for an error-severity diagnostic."""
        return cls(Severity.ERROR, code, message, span, tuple(notes))

    @property
    def taxonomy(self) -> Taxonomy | None:
        """The guarded error kind of this diagnostic's code."""
        return self.code.taxonomy

    def sort_key(self) -> tuple[str, int, int, str]:
        """Order by span, then code; span-less diagnostics come first."""
        if self.span is None:
            return ("", 0, 0, self.code.value)
        return (
            self.span.file,
            self.span.start_line,
            self.span.start_col,
            self.code.value,
        )

    def format(self, default_file: str = "<input>") -> str:
        """Render as ``file:line:col: severity[code]: message``."""
        if self.span is None:
            location = f"{default_file}:0:0"
        else:
            location = str(self.span)
        text = f"{location}: {self.severity}[{self.code}]: {self.message}"
        for note in self.notes:
            text += f"\n  note: {note}"
        return text

    def to_record(self, default_file: str = "<input>") -> dict[str, object]:
        """Machine-readable form used by ``check --json``."""
        span = self.span
        return {
            "code": self.code.value,
            "taxonomy": self.taxonomy.value if self.taxonomy else None,
            "severity": self.severity.value,
            "file": span.file if span else default_file,
            "line": span.start_line if span else 0,
            "column": span.start_col if span else 0,
            "message": self.message,
        }


def sort_diagnostics(diagnostics: "list[Diagnostic] | tuple[Diagnostic, ...]") -> list[Diagnostic]:
    """Deterministic order: by span, then code, then message."""
    return sorted(diagnostics, key=lambda d: (*d.sort_key(), d.message))


class MungoError(Exception):
    """Base class for all errors raised by this package."""


class UnknownClassError(MungoError):
    """A class name that the program does not declare."""

    def __init__(self, name: str) -> None:
        super().__init__(f"unknown class '{name}'")
        self.name = name


class ArityMismatchError(MungoError):
    """A generic class used without an argument, or a plain class with one."""

    def __init__(self, name: str, generic: bool) -> None:
        expected = "a type argument" if generic else "no type argument"
        super().__init__(f"class '{name}' expects {expected}")
        self.name = name
        self.generic = generic


class UnboundUsageVariableError(MungoError):
    """A usage variable without a defining equation."""

    def __init__(self, variable: str) -> None:
        super().__init__(f"usage variable '{variable}' is not bound")
        self.variable = variable


class UnfoldCycleError(MungoError):
    """Unfolding a usage variable never reaches a branch, choice or end."""

    def __init__(self, cycle: tuple[str, ...]) -> None:
        super().__init__("non-productive usage equations: " + " = ".join(cycle))
        self.cycle = cycle


class DiagnosticError(MungoError):
    """Carries one or more diagnostics out of a checking routine."""

    def __init__(self, diagnostics: "list[Diagnostic] | tuple[Diagnostic, ...]") -> None:
        self.diagnostics = tuple(diagnostics)
        first = self.diagnostics[0].message if self.diagnostics else "no diagnostics"
        super().__init__(first)

    @property
    def codes(self) -> frozenset[DiagnosticCode]:
        """Codes of all carried diagnostics."""
        return frozenset(d.code for d in self.diagnostics)


class InternalInvariantViolation(MungoError):
    """The interpreter reached a configuration that cannot be reachable."""


class ExpectationError(MungoError):
    """A corpus expectation sidecar is missing or malformed."""
