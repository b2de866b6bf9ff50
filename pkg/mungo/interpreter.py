"""Small-step operational semantics for Mungo.

A configuration is a heap, a parameter stack and the expression under
evaluation. The stack is stored bottom first: ``stack[0]`` is the frame of
the ``Main`` object and ``stack[-1]`` is the frame of the active object.
Evaluating ``return{e}`` strips the bottom frame, steps ``e`` against the
frames above it and puts the bottom frame back, so each nested
``return{...}`` runs against its own callee frame.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace
from enum import StrEnum

from mungo.config import MAIN_CLASS, MAIN_METHOD, MAIN_OBJECT, MAIN_PARAMETER, OBJECT_PREFIX
from mungo.errors import (
    ArityMismatchError,
    Diagnostic,
    DiagnosticCode,
    DiagnosticError,
    InternalInvariantViolation,
    UnknownClassError,
)
from mungo.printer import expr_head, format_expr, format_type, format_value
from mungo.syntax import (
    BOOL,
    BOTTOM,
    END_USAGE,
    NULL,
    UNIT,
    VOID,
    Assign,
    BaseType,
    BoolValue,
    Call,
    ClassInfo,
    Continue,
    Expr,
    If,
    Labelled,
    LabelValue,
    Lit,
    New,
    NewGen,
    NullValue,
    ObjectRef,
    Program,
    Ref,
    RefKind,
    Return,
    Seq,
    Switch,
    TypeExpr,
    Typestate,
    UnitValue,
    Value,
    class_info,
    init_vals,
    objects_of,
    returns_of,
    substitute_continue,
    well_formed_expression,
)
from mungo.usages import is_reachable, step_label, step_method

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeapEntry:
    """An object's current typestate and field values."""

    typestate: Typestate
    fields: Mapping[str, Value]


@dataclass(frozen=True)
class RuntimeFrame:
    """Active object ``obj`` with parameter binding ``[param ↦ value]``."""

    obj: str
    param: str
    value: Value


Heap = Mapping[str, HeapEntry]


@dataclass(frozen=True)
class Configuration:
    """``⟨heap, stack, expr⟩`` plus the supply of fresh object names."""

    heap: Heap
    stack: tuple[RuntimeFrame, ...]
    expr: Expr
    next_id: int = 1


class StuckReason(StrEnum):
    """Why no reduction rule applies."""

    NULL_CALL_FIELD = "NullCall1"
    NULL_CALL_PARAM = "NullCall2"
    METHOD_NOT_AVAILABLE_FIELD = "MthdNotAv1"
    METHOD_NOT_AVAILABLE_PARAM = "MthdNotAv2"
    FIELD_ERROR = "FldErr"
    FIELD_MISUSED = "FieldMisused"
    PARAMETER_MISUSED = "ParameterMisused"
    LINEAR_VALUE_DROPPED = "LinearValueDropped"
    METHOD_NOT_UNDERSTOOD = "MethodNotUnderstood"
    LABEL_NOT_OFFERED = "LabelNotOffered"
    BAD_VALUE = "BadValue"
    UNBOUND_CONTINUE = "UnboundContinue"
    UNBOUND_PARAMETER = "UnboundParameter"

    @property
    def monitored(self) -> bool:
        """Whether the error predicates classify this reason."""
        return self in MONITORED_REASONS


MONITORED_REASONS = frozenset(
    {
        StuckReason.NULL_CALL_FIELD,
        StuckReason.NULL_CALL_PARAM,
        StuckReason.METHOD_NOT_AVAILABLE_FIELD,
        StuckReason.METHOD_NOT_AVAILABLE_PARAM,
        StuckReason.FIELD_ERROR,
    }
)


@dataclass(frozen=True)
class Stepped:
    """One reduction; ``rules`` is the composite path ending in the ground rule."""

    configuration: Configuration
    rules: tuple[str, ...]

    @property
    def rule(self) -> str:
        return "/".join(self.rules)


@dataclass(frozen=True)
class Terminal:
    """The main body evaluated to ``value``."""

    value: Value


@dataclass(frozen=True)
class Stuck:
    """No rule applies."""

    reason: StuckReason
    detail: str


StepResult = Stepped | Terminal | Stuck


class _StuckSignal(Exception):
    def __init__(self, reason: StuckReason, detail: str) -> None:
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


# --------------------------------------------------------------------------
# Values and the initial configuration
# --------------------------------------------------------------------------


def get_type(v: Value, heap: Heap, program: Program | None = None) -> TypeExpr | None:
    """Type of a run-time value.

    Returns ``None`` for an object missing from ``heap``, and for a label
    when no program is given to resolve its enum.
    """
    match v:
        case UnitValue():
            return VOID
        case BoolValue():
            return BOOL
        case NullValue():
            return BOTTOM
        case LabelValue(label):
            owner = program.label_owner.get(label) if program else None
            return BaseType(owner) if owner else None
        case ObjectRef(oid):
            entry = heap.get(oid)
            return entry.typestate if entry else None
    raise AssertionError(f"unhandled value {v!r}")  # pragma: no cover


def lin_value(v: Value, heap: Heap) -> bool:
    """Whether ``v`` is an object whose usage is not yet ``end``."""
    if isinstance(v, ObjectRef) and v.oid in heap:
        return not heap[v.oid].typestate.usage.is_end
    return False


def initial_configuration(program: Program) -> Configuration:
    """Heap with the ``Main`` object only, its usage already at ``end``.

    Raises:
        DiagnosticError: If there is no usable ``Main`` class
    """
    decl = program.class_map.get(MAIN_CLASS)
    if decl is None or MAIN_METHOD not in decl.method_map:
        raise DiagnosticError(
            [
                Diagnostic.error(
                    DiagnosticCode.MISSING_MAIN_CLASS,
                    f"program has no class '{MAIN_CLASS}' with method '{MAIN_METHOD}'",
                )
            ]
        )
    view = class_info(program, MAIN_CLASS)
    heap = {
        MAIN_OBJECT: HeapEntry(
            Typestate(MAIN_CLASS, BOTTOM, END_USAGE), init_vals(view.fields)
        )
    }
    stack = (RuntimeFrame(MAIN_OBJECT, MAIN_PARAMETER, UNIT),)
    return Configuration(heap, stack, decl.method_map[MAIN_METHOD].body)


# --------------------------------------------------------------------------
# Reduction
# --------------------------------------------------------------------------


def _value(e: Expr) -> Value | None:
    return e.value if isinstance(e, Lit) else None


class _Reducer:
    """Applies one reduction to a configuration, working on a private heap copy."""

    def __init__(self, program: Program, config: Configuration) -> None:
        self.program = program
        self.heap: dict[str, HeapEntry] = dict(config.heap)
        self.next_id = config.next_id

    def view(self, ts: Typestate) -> ClassInfo:
        try:
            return class_info(self.program, ts.class_name, ts.arg)
        except (UnknownClassError, ArityMismatchError) as e:
            raise InternalInvariantViolation(str(e)) from e

    def fresh(self) -> str:
        oid = f"{OBJECT_PREFIX}{self.next_id}"
        self.next_id += 1
        return oid

    def set_field(self, oid: str, name: str, v: Value) -> None:
        entry = self.heap[oid]
        self.heap[oid] = replace(entry, fields={**entry.fields, name: v})

    def set_usage(self, oid: str, ts: Typestate) -> None:
        self.heap[oid] = replace(self.heap[oid], typestate=ts)

    def active(self, stack: tuple[RuntimeFrame, ...]) -> RuntimeFrame:
        if not stack:
            raise InternalInvariantViolation("empty parameter stack")
        return stack[-1]

    def read_field(self, stack: tuple[RuntimeFrame, ...], name: str) -> Value:
        obj = self.active(stack).obj
        fields = self.heap[obj].fields
        if name not in fields:
            raise _StuckSignal(
                StuckReason.FIELD_ERROR, f"object '{obj}' has no field '{name}'"
            )
        return fields[name]

    def read_param(self, stack: tuple[RuntimeFrame, ...], name: str) -> Value:
        frame = self.active(stack)
        if frame.param != name:
            raise _StuckSignal(
                StuckReason.UNBOUND_PARAMETER, f"parameter '{name}' is not bound"
            )
        return frame.value

    def reduce(
        self, stack: tuple[RuntimeFrame, ...], e: Expr
    ) -> tuple[tuple[RuntimeFrame, ...], Expr, tuple[str, ...]]:
        match e:
            case Lit():
                raise InternalInvariantViolation("a value cannot be reduced")
            case Ref(name, RefKind.PARAM):
                v = self.read_param(stack, name)
                if lin_value(v, self.heap):
                    frame = self.active(stack)
                    return (*stack[:-1], replace(frame, value=NULL)), Lit(v), ("lParam",)
                return stack, Lit(v), ("uParam",)
            case Ref(name, _):
                v = self.read_field(stack, name)
                if lin_value(v, self.heap):
                    self.set_field(self.active(stack).obj, name, NULL)
                    return stack, Lit(v), ("lDeref",)
                return stack, Lit(v), ("uDeref",)
            case New(cls) | NewGen(cls, _):
                arg = e.arg if isinstance(e, NewGen) else BOTTOM
                try:
                    view = class_info(self.program, cls, arg)
                except (UnknownClassError, ArityMismatchError) as err:
                    raise InternalInvariantViolation(str(err)) from err
                oid = self.fresh()
                self.heap[oid] = HeapEntry(view.initial_type, init_vals(view.fields))
                rule = "NewGen" if isinstance(e, NewGen) else "New"
                return stack, Lit(ObjectRef(oid)), (rule,)
            case Assign(name, value):
                v = _value(value)
                if v is None:
                    stack, inner, rules = self.reduce(stack, value)
                    return stack, replace(e, value=inner), ("FldC", *rules)
                old = self.read_field(stack, name)
                if lin_value(old, self.heap):
                    raise _StuckSignal(
                        StuckReason.FIELD_MISUSED,
                        f"field '{name}' still holds linear object {format_value(old)}",
                    )
                self.set_field(self.active(stack).obj, name, v)
                return stack, Lit(UNIT), ("Upd",)
            case Call(target, method, arg):
                v = _value(arg)
                if v is None:
                    stack, inner, rules = self.reduce(stack, arg)
                    return stack, replace(e, arg=inner), ("MthdC", *rules)
                return self.call(stack, target, method, v)
            case Seq(first, second):
                v = _value(first)
                if v is None:
                    stack, inner, rules = self.reduce(stack, first)
                    return stack, replace(e, first=inner), ("SeqC", *rules)
                if lin_value(v, self.heap):
                    raise _StuckSignal(
                        StuckReason.LINEAR_VALUE_DROPPED,
                        f"linear object {format_value(v)} is discarded",
                    )
                return stack, second, ("Seq",)
            case If(cond, then, orelse):
                v = _value(cond)
                if v is None:
                    stack, inner, rules = self.reduce(stack, cond)
                    return stack, replace(e, cond=inner), ("IfC", *rules)
                if not isinstance(v, BoolValue):
                    raise _StuckSignal(
                        StuckReason.BAD_VALUE, f"condition is {format_value(v)}, not a bool"
                    )
                if v.value:
                    return stack, then, ("IfTrue",)
                return stack, orelse, ("IfFls",)
            case Switch(target, _, scrutinee, _):
                v = _value(scrutinee)
                if v is None:
                    stack, inner, rules = self.reduce(stack, scrutinee)
                    return stack, replace(e, scrutinee=inner), ("SwC", *rules)
                return self.switch(stack, e, target, v)
            case Labelled(label, body):
                return stack, substitute_continue(body, label, e), ("Lbl",)
            case Continue(label):
                raise _StuckSignal(
                    StuckReason.UNBOUND_CONTINUE, f"'continue {label}' outside its loop"
                )
            case Return(body):
                v = _value(body)
                if v is None:
                    if len(stack) < 2:
                        raise InternalInvariantViolation("return{...} without a callee frame")
                    bottom = stack[0]
                    inner_stack, inner, rules = self.reduce(stack[1:], body)
                    return (bottom, *inner_stack), replace(e, body=inner), ("RetC", *rules)
                if len(stack) < 2:
                    raise InternalInvariantViolation("return from the main frame")
                frame = stack[-1]
                if frame.value != v and lin_value(frame.value, self.heap):
                    raise _StuckSignal(
                        StuckReason.PARAMETER_MISUSED,
                        f"parameter '{frame.param}' still holds linear object "
                        f"{format_value(frame.value)} on return",
                    )
                return stack[:-1], Lit(v), ("Ret",)
        raise AssertionError(f"unhandled expression {e!r}")  # pragma: no cover

    def receiver(
        self, stack: tuple[RuntimeFrame, ...], target: Ref, what: str
    ) -> tuple[str, HeapEntry]:
        is_param = target.kind is RefKind.PARAM
        if is_param:
            v = self.read_param(stack, target.name)
        else:
            v = self.read_field(stack, target.name)
        if isinstance(v, NullValue):
            reason = StuckReason.NULL_CALL_PARAM if is_param else StuckReason.NULL_CALL_FIELD
            raise _StuckSignal(reason, f"'{target.name}' is null at {what}")
        if not isinstance(v, ObjectRef):
            raise _StuckSignal(
                StuckReason.METHOD_NOT_UNDERSTOOD,
                f"'{target.name}' holds {format_value(v)}, not an object",
            )
        return v.oid, self.heap[v.oid]

    def call(
        self, stack: tuple[RuntimeFrame, ...], target: Ref, method: str, v: Value
    ) -> tuple[tuple[RuntimeFrame, ...], Expr, tuple[str, ...]]:
        is_param = target.kind is RefKind.PARAM
        oid, entry = self.receiver(stack, target, f"call of '{method}'")
        ts = entry.typestate
        advanced = step_method(ts.usage, method)
        if advanced is None:
            reason = (
                StuckReason.METHOD_NOT_AVAILABLE_PARAM
                if is_param
                else StuckReason.METHOD_NOT_AVAILABLE_FIELD
            )
            raise _StuckSignal(
                reason, f"{format_type(ts)} does not allow calling '{method}'"
            )
        decl = self.view(ts).methods.get(method)
        if decl is None:
            raise _StuckSignal(
                StuckReason.METHOD_NOT_UNDERSTOOD,
                f"class '{ts.class_name}' has no method '{method}'",
            )
        self.set_usage(oid, replace(ts, usage=advanced))
        frame = RuntimeFrame(oid, decl.param_name, v)
        rule = "CallP" if is_param else "CallF"
        return (*stack, frame), Return(decl.body, span=decl.body.span), (rule,)

    def switch(
        self, stack: tuple[RuntimeFrame, ...], e: Switch, target: Ref, v: Value
    ) -> tuple[tuple[RuntimeFrame, ...], Expr, tuple[str, ...]]:
        if not isinstance(v, LabelValue):
            raise _StuckSignal(
                StuckReason.BAD_VALUE, f"switch on {format_value(v)}, not a label"
            )
        try:
            oid, entry = self.receiver(stack, target, f"switch on '{v.label}'")
        except _StuckSignal as s:
            # the error predicates only cover calls
            raise _StuckSignal(StuckReason.BAD_VALUE, s.detail) from None
        ts = entry.typestate
        advanced = step_label(ts.usage, v.label)
        branch = e.branch(v.label)
        if advanced is None or branch is None:
            raise _StuckSignal(
                StuckReason.LABEL_NOT_OFFERED,
                f"label '{v.label}' is not offered by {format_type(ts)} or not handled",
            )
        self.set_usage(oid, replace(ts, usage=advanced))
        rule = "SwP" if target.kind is RefKind.PARAM else "SwF"
        return stack, branch, (rule,)


def step(program: Program, config: Configuration) -> StepResult:
    """Apply the single reduction rule enabled in ``config``.

    Raises:
        InternalInvariantViolation: If ``config`` is not well formed in a way
            no reachable configuration can be
    """
    v = _value(config.expr)
    if v is not None:
        if len(config.stack) == 1:
            return Terminal(v)
        raise InternalInvariantViolation("value reached with callee frames still pushed")
    reducer = _Reducer(program, config)
    try:
        stack, expr, rules = reducer.reduce(config.stack, config.expr)
    except _StuckSignal as s:
        return Stuck(s.reason, s.detail)
    return Stepped(Configuration(reducer.heap, stack, expr, reducer.next_id), rules)


# --------------------------------------------------------------------------
# Runs
# --------------------------------------------------------------------------


class RunStatus(StrEnum):
    TERMINAL = "Terminal"
    STUCK = "Stuck"
    BUDGET = "Budget"


@dataclass(frozen=True)
class TraceEntry:
    """One executed step."""

    step: int
    rule: str
    head: str
    heap_size: int
    digest: str

    def line(self) -> str:
        return f"step {self.step}: {self.rule} | {self.head} | {self.heap_size}"


@dataclass(frozen=True)
class RunOutcome:
    """Result of :func:`run`.

    Attributes:
        status: How the run ended
        steps: Reductions performed
        final: The last configuration reached
        value: Result value when ``status`` is terminal
        stuck: Reason and detail when ``status`` is stuck
        rule_counts: Number of times each rule name fired, composite
            rules included
        trace: Per-step records, when tracing was enabled
        protocols_completed: Whether every heap object ended at ``end``;
            ``None`` unless terminal
    """

    status: RunStatus
    steps: int
    final: Configuration
    value: Value | None = None
    stuck: Stuck | None = None
    rule_counts: Counter[str] = field(default_factory=Counter)
    trace: tuple[TraceEntry, ...] = ()
    protocols_completed: bool | None = None

    @property
    def kind(self) -> str:
        """``Terminal``, ``Budget`` or ``Stuck:<reason>``."""
        if self.stuck is not None:
            return f"{self.status}:{self.stuck.reason}"
        return str(self.status)


def describe_configuration(config: Configuration) -> str:
    """Stable textual form of a configuration."""
    lines = []
    for oid in sorted(config.heap, key=_oid_order):
        entry = config.heap[oid]
        fields = ", ".join(f"{k}={format_value(v)}" for k, v in entry.fields.items())
        lines.append(f"{oid}: {format_type(entry.typestate)} {{{fields}}}")
    stack = " ".join(f"({f.obj}, {f.param}={format_value(f.value)})" for f in config.stack)
    lines.append(f"stack: {stack}")
    lines.append(f"expr: {format_expr(config.expr)}")
    return "\n".join(lines)


def configuration_digest(config: Configuration) -> str:
    return hashlib.sha256(describe_configuration(config).encode("utf-8")).hexdigest()


def _oid_order(oid: str) -> tuple[int, str]:
    suffix = oid.removeprefix(OBJECT_PREFIX)
    return (int(suffix), oid) if suffix.isdigit() else (-1, oid)


def protocols_completed(config: Configuration) -> bool:
    return all(entry.typestate.usage.is_end for entry in config.heap.values())


StepObserver = Callable[[int, Configuration], None]


def run(
    program: Program,
    max_steps: int,
    trace: bool = False,
    observer: StepObserver | None = None,
) -> RunOutcome:
    """Evaluate ``Main.main`` for at most ``max_steps`` reductions.

    Args:
        program: A parsed program; it need not type check
        max_steps: Reduction budget
        trace: Whether to record a :class:`TraceEntry` per step
        observer: Called with the step count and each configuration before
            it is stepped; exceptions it raises abort the run

    Returns:
        How the run ended, with rule counts and the optional trace
    """
    config = initial_configuration(program)
    counts: Counter[str] = Counter()
    entries: list[TraceEntry] = []
    steps = 0
    while True:
        if observer is not None:
            observer(steps, config)
        result = step(program, config)
        match result:
            case Terminal(value):
                logger.debug("terminal after %d steps: %s", steps, format_value(value))
                return RunOutcome(
                    RunStatus.TERMINAL,
                    steps,
                    config,
                    value=value,
                    rule_counts=counts,
                    trace=tuple(entries),
                    protocols_completed=protocols_completed(config),
                )
            case Stuck(reason, detail):
                logger.debug("stuck after %d steps: %s (%s)", steps, reason, detail)
                return RunOutcome(
                    RunStatus.STUCK,
                    steps,
                    config,
                    stuck=result,
                    rule_counts=counts,
                    trace=tuple(entries),
                )
            case Stepped(nxt, rules):
                if steps == max_steps:
                    break
                steps += 1
                counts.update(rules)
                if trace:
                    entries.append(
                        TraceEntry(
                            steps,
                            result.rule,
                            expr_head(nxt.expr),
                            len(nxt.heap),
                            configuration_digest(nxt),
                        )
                    )
                config = nxt
    logger.info("step budget of %d exhausted", max_steps)
    return RunOutcome(
        RunStatus.BUDGET, steps, config, rule_counts=counts, trace=tuple(entries)
    )


# --------------------------------------------------------------------------
# Well-formedness
# --------------------------------------------------------------------------


def _object_occurrences(config: Configuration) -> list[str]:
    found = objects_of(config.expr)
    for entry in config.heap.values():
        found.extend(v.oid for v in entry.fields.values() if isinstance(v, ObjectRef))
    found.extend(f.value.oid for f in config.stack if isinstance(f.value, ObjectRef))
    return found


def well_formed_configuration(program: Program, config: Configuration) -> list[str]:
    """Reasons ``config`` is not well formed; empty when it is.

    Terminated objects may be shared, since reading them leaves the
    original reference in place; linear objects must occur at most once.
    """
    reasons: list[str] = []
    heap = config.heap
    expected = 1 + len(returns_of(config.expr))
    if len(config.stack) != expected:
        reasons.append(
            f"stack has {len(config.stack)} frames, expected {expected} for the returns"
        )
    if not config.stack or config.stack[0].obj != MAIN_OBJECT:
        reasons.append(f"bottom frame is not the '{MAIN_OBJECT}' frame")
    missing = [f.obj for f in config.stack if f.obj not in heap]
    if missing:
        reasons.append(f"stack objects not in heap: {', '.join(missing)}")
    if not well_formed_expression(config.expr):
        reasons.append("expression is not well formed")
    counts = Counter(_object_occurrences(config))
    dangling = sorted(oid for oid in counts if oid not in heap)
    if dangling:
        reasons.append(f"references to objects not in heap: {', '.join(dangling)}")
    shared = sorted(
        oid
        for oid, n in counts.items()
        if n > 1 and oid in heap and lin_value(ObjectRef(oid), heap)
    )
    if shared:
        reasons.append(f"linear objects referenced more than once: {', '.join(shared)}")
    for oid, entry in heap.items():
        ts = entry.typestate
        try:
            decl = program.class_decl(ts.class_name)
            view = class_info(program, ts.class_name, ts.arg)
        except (UnknownClassError, ArityMismatchError) as e:
            reasons.append(f"object '{oid}': {e}")
            continue
        if not is_reachable(decl.usage, ts.usage):
            reasons.append(f"object '{oid}' is at an unreachable usage {format_type(ts)}")
        if set(entry.fields) != set(view.fields):
            reasons.append(f"object '{oid}' has fields {sorted(entry.fields)}")
    return reasons


def linearity_violations(config: Configuration) -> list[str]:
    """Linear objects not referenced exactly once in the configuration."""
    counts = Counter(_object_occurrences(config))
    problems = []
    for oid in sorted(config.heap, key=_oid_order):
        if not lin_value(ObjectRef(oid), config.heap):
            continue
        n = counts.get(oid, 0)
        if n != 1:
            problems.append(f"linear object '{oid}' is referenced {n} times")
    return problems
