"""Flow-sensitive type system for Mungo.

Expressions are typed against an approximation of the heap (``lam``), the
free run-time objects (``objects``) and the parameter stack (``stack``);
typing returns the expression's type together with the environments left
behind. Classes are typed by walking their usage and checking every method
body the usage makes reachable.

A ``continue`` and a return to an already visited recursion variable type
as *divergent* (``None``): such a path contributes no result, and the
enclosing join adopts whatever its other arms produce.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

from mungo.config import THIS, TOP_CLASS
from mungo.errors import (
    ArityMismatchError,
    Diagnostic,
    DiagnosticCode,
    DiagnosticError,
    SourceSpan,
    UnknownClassError,
    sort_diagnostics,
)
from mungo.printer import format_type, format_usage
from mungo.syntax import (
    BOOL,
    BOTTOM,
    TOP_TYPE,
    VOID,
    Assign,
    BaseType,
    BoolValue,
    Bottom,
    Branch,
    Call,
    Choice,
    ClassDecl,
    ClassInfo,
    Continue,
    End,
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
    TopUsage,
    TypeExpr,
    Typestate,
    UnitValue,
    Usage,
    UsageVar,
    agree,
    class_info,
    init_types,
    lin_type,
    terminated_field_env,
    terminated_type,
)
from mungo.usages import step_label, step_method, unfold

logger = logging.getLogger(__name__)

FieldTypeEnv = Mapping[str, TypeExpr]


@dataclass(frozen=True)
class ObjectEntry:
    """Static view of one object: its class and the types of its fields."""

    class_name: str
    arg: TypeExpr
    fields: FieldTypeEnv


@dataclass(frozen=True)
class Frame:
    """One parameter-stack level: active object and ``[param ↦ type]``."""

    obj: str
    param: str
    type: TypeExpr


@dataclass(frozen=True)
class TypingState:
    """Object field environment, object type environment and parameter stack.

    Attributes:
        lam: Object identity to class view and field types
        objects: Types of the objects occurring free in the expression
        stack: Parameter type frames, bottom first; the last frame is active
    """

    lam: Mapping[str, ObjectEntry]
    objects: Mapping[str, TypeExpr] = field(default_factory=dict)
    stack: tuple[Frame, ...] = ()

    @property
    def active(self) -> Frame:
        if not self.stack:
            raise DiagnosticError(
                [
                    Diagnostic.error(
                        DiagnosticCode.WELL_TYPED_STACK, "parameter stack is empty"
                    )
                ]
            )
        return self.stack[-1]

    def field_type(self, name: str, span: SourceSpan | None) -> TypeExpr:
        obj = self.active.obj
        entry = self.lam.get(obj)
        if entry is None or name not in entry.fields:
            raise _error(
                DiagnosticCode.FIELD_NOT_UNDERSTOOD,
                f"object '{obj}' has no field '{name}'",
                span,
            )
        return entry.fields[name]

    def with_field(self, name: str, t: TypeExpr) -> TypingState:
        obj = self.active.obj
        entry = self.lam[obj]
        lam = dict(self.lam)
        lam[obj] = replace(entry, fields={**entry.fields, name: t})
        return replace(self, lam=lam)

    def param_type(self, name: str, span: SourceSpan | None) -> TypeExpr:
        frame = self.active
        if frame.param != name:
            raise _error(
                DiagnosticCode.TYPE_MISMATCH,
                f"parameter '{name}' is not bound in the active frame",
                span,
            )
        return frame.type

    def with_param(self, t: TypeExpr) -> TypingState:
        frame = self.active
        return replace(self, stack=(*self.stack[:-1], replace(frame, type=t)))

    def ref_type(self, ref: Ref) -> TypeExpr:
        if ref.kind is RefKind.PARAM:
            return self.param_type(ref.name, ref.span)
        return self.field_type(ref.name, ref.span)

    def with_ref(self, ref: Ref, t: TypeExpr) -> TypingState:
        if ref.kind is RefKind.PARAM:
            return self.with_param(t)
        return self.with_field(ref.name, t)


@dataclass(frozen=True)
class Typed:
    """Result of typing an expression that may complete normally."""

    type: TypeExpr
    state: TypingState


LabelEnv = Mapping[str, TypingState]


def _error(
    code: DiagnosticCode, message: str, span: SourceSpan | None, *notes: str
) -> DiagnosticError:
    return DiagnosticError([Diagnostic.error(code, message, span, *notes)])


class TypeContext:
    """Program-wide lookups shared by all typing judgements of one check."""

    def __init__(self, program: Program) -> None:
        self.program = program
        self._views: dict[tuple[str, TypeExpr], ClassInfo] = {}

    def view(self, name: str, arg: TypeExpr, span: SourceSpan | None = None) -> ClassInfo:
        key = (name, arg)
        if key not in self._views:
            try:
                self._views[key] = class_info(self.program, name, arg)
            except (UnknownClassError, ArityMismatchError) as e:
                code = (
                    DiagnosticCode.UNDECLARED_NAME
                    if isinstance(e, UnknownClassError)
                    else DiagnosticCode.ARITY_MISMATCH
                )
                raise _error(code, str(e), span) from e
        return self._views[key]

    def enum_of(self, label: str, span: SourceSpan | None) -> BaseType:
        owner = self.program.label_owner.get(label)
        if owner is None:
            raise _error(DiagnosticCode.UNDECLARED_NAME, f"label '{label}' is not declared", span)
        return BaseType(owner)


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


def _join(results: list[Typed | None], span: SourceSpan | None, what: str) -> Typed | None:
    live = [r for r in results if r is not None]
    if not live:
        return None
    first = live[0]
    for other in live[1:]:
        if other.type != first.type:
            raise _error(
                DiagnosticCode.BRANCH_MISMATCH,
                f"{what} produce different types: {format_type(first.type)} "
                f"and {format_type(other.type)}",
                span,
            )
        if other.state != first.state:
            raise _error(
                DiagnosticCode.BRANCH_MISMATCH,
                f"{what} leave the environments in different states",
                span,
                *_state_difference(first.state, other.state),
            )
    return first


def _state_difference(a: TypingState, b: TypingState) -> list[str]:
    notes: list[str] = []
    for obj in sorted(set(a.lam) | set(b.lam)):
        fa = a.lam[obj].fields if obj in a.lam else {}
        fb = b.lam[obj].fields if obj in b.lam else {}
        for name in sorted(set(fa) | set(fb)):
            ta, tb = fa.get(name), fb.get(name)
            if ta != tb:
                left = format_type(ta) if ta is not None else "-"
                right = format_type(tb) if tb is not None else "-"
                notes.append(f"field '{name}': {left} versus {right}")
    for fa_, fb_ in zip(a.stack, b.stack, strict=False):
        if fa_ != fb_:
            notes.append(
                f"parameter '{fa_.param}': {format_type(fa_.type)} versus {format_type(fb_.type)}"
            )
    return notes


def _drop_code(e: Expr) -> DiagnosticCode:
    if isinstance(e, Ref):
        if e.kind is RefKind.PARAM:
            return DiagnosticCode.PARAMETER_MISUSED
        return DiagnosticCode.FIELD_MISUSED
    return DiagnosticCode.TYPE_MISMATCH


def _receiver(
    ctx: TypeContext, state: TypingState, ref: Ref, method: str, span: SourceSpan | None
) -> tuple[Typestate, ClassInfo]:
    t = state.ref_type(ref)
    if isinstance(t, Bottom):
        if ref.kind is RefKind.PARAM:
            raise _error(
                DiagnosticCode.PARAMETER_NOT_AVAILABLE,
                f"parameter '{ref.name}' may be null when calling '{method}'",
                span,
            )
        raise _error(
            DiagnosticCode.FIELD_NOT_AVAILABLE,
            f"field '{ref.name}' may be null when calling '{method}'",
            span,
        )
    if not isinstance(t, Typestate):
        raise _error(
            DiagnosticCode.METHOD_NOT_UNDERSTOOD,
            f"'{ref.name}' has type {format_type(t)}, which has no method '{method}'",
            span,
        )
    view = ctx.view(t.class_name, t.arg, span)
    if t.class_name != TOP_CLASS and method not in view.methods:
        raise _error(
            DiagnosticCode.METHOD_NOT_UNDERSTOOD,
            f"class '{t.class_name}' has no method '{method}'",
            span,
        )
    return t, view


def type_expression(
    ctx: TypeContext,
    state: TypingState,
    e: Expr,
    labels: LabelEnv | None = None,
) -> Typed | None:
    """Type ``e`` from ``state``.

    Returns:
        The type and the resulting state, or ``None`` if every path through
        ``e`` ends in a ``continue``

    Raises:
        DiagnosticError: With the first violated premise
    """
    labels = labels or {}
    match e:
        case Lit(UnitValue()):
            return Typed(VOID, state)
        case Lit(BoolValue()):
            return Typed(BOOL, state)
        case Lit(NullValue()):
            return Typed(BOTTOM, state)
        case Lit(LabelValue(label)):
            return Typed(ctx.enum_of(label, e.span), state)
        case Lit(ObjectRef(oid)):
            if oid not in state.objects:
                raise _error(
                    DiagnosticCode.WELL_TYPED_OBJECTS,
                    f"object '{oid}' is not in the object type environment",
                    e.span,
                )
            objects = dict(state.objects)
            t = objects.pop(oid)
            return Typed(t, replace(state, objects=objects))
        case Ref():
            t = state.ref_type(e)
            if lin_type(t):
                return Typed(t, state.with_ref(e, BOTTOM))
            return Typed(t, state)
        case New(cls):
            return Typed(ctx.view(cls, BOTTOM, e.span).initial_type, state)
        case NewGen(cls, arg):
            return Typed(ctx.view(cls, arg, e.span).initial_type, state)
        case Assign(name, value):
            return _type_assign(ctx, state, name, value, e.span, labels)
        case Call(target, method, arg):
            return _type_call(ctx, state, target, method, arg, e.span, labels)
        case Seq(first, second):
            head = type_expression(ctx, state, first, labels)
            if head is None:
                return None
            if lin_type(head.type):
                raise _error(
                    _drop_code(first),
                    f"value of linear type {format_type(head.type)} is discarded",
                    first.span,
                )
            return type_expression(ctx, head.state, second, labels)
        case If(cond, then, orelse):
            test = type_expression(ctx, state, cond, labels)
            if test is None:
                return None
            if test.type != BOOL:
                raise _error(
                    DiagnosticCode.TYPE_MISMATCH,
                    f"condition has type {format_type(test.type)}, expected bool",
                    cond.span,
                )
            arms = [
                type_expression(ctx, test.state, then, labels),
                type_expression(ctx, test.state, orelse, labels),
            ]
            return _join(arms, e.span, "the branches of 'if'")
        case Switch():
            return _type_switch(ctx, state, e, labels)
        case Labelled(label, body):
            inner = type_expression(ctx, state, body, {**labels, label: state})
            if inner is None:
                return None
            if inner.type != VOID:
                raise _error(
                    DiagnosticCode.TYPE_MISMATCH,
                    f"loop '{label}' has type {format_type(inner.type)}, expected void",
                    e.span,
                )
            return inner
        case Continue(label):
            if label not in labels:
                raise _error(
                    DiagnosticCode.UNDECLARED_LOOP_LABEL,
                    f"'continue {label}' is not inside loop '{label}'",
                    e.span,
                )
            if labels[label] != state:
                raise _error(
                    DiagnosticCode.LOOP_ENV_MISMATCH,
                    f"environments at 'continue {label}' differ from the loop entry",
                    e.span,
                    *_state_difference(labels[label], state),
                )
            return None
        case Return(body):
            return _type_return(ctx, state, body, e.span)
    raise AssertionError(f"unhandled expression {e!r}")  # pragma: no cover


def _type_assign(
    ctx: TypeContext,
    state: TypingState,
    name: str,
    value: Expr,
    span: SourceSpan | None,
    labels: LabelEnv,
) -> Typed | None:
    rhs = type_expression(ctx, state, value, labels)
    if rhs is None:
        return None
    after = rhs.state
    old = after.field_type(name, span)
    if lin_type(old):
        raise _error(
            DiagnosticCode.FIELD_MISUSED,
            f"assignment overwrites field '{name}' which still holds {format_type(old)}",
            span,
        )
    entry = after.lam[after.active.obj]
    declared = ctx.view(entry.class_name, entry.arg, span).fields[name]
    if not agree(declared, rhs.type):
        raise _error(
            DiagnosticCode.TYPE_MISMATCH,
            f"cannot store {format_type(rhs.type)} in field '{name}'",
            span,
        )
    return Typed(VOID, after.with_field(name, rhs.type))


def _type_call(
    ctx: TypeContext,
    state: TypingState,
    target: Ref,
    method: str,
    arg: Expr,
    span: SourceSpan | None,
    labels: LabelEnv,
) -> Typed | None:
    argument = type_expression(ctx, state, arg, labels)
    if argument is None:
        return None
    after = argument.state
    receiver, view = _receiver(ctx, after, target, method, span)
    advanced = step_method(receiver.usage, method)
    if advanced is None:
        raise _error(
            DiagnosticCode.METHOD_NOT_AVAILABLE,
            f"'{target.name}' at usage {format_usage(receiver.usage)} "
            f"does not allow calling '{method}'",
            span,
        )
    decl = view.methods[method]
    if argument.type != decl.param_type:
        raise _error(
            DiagnosticCode.TYPE_MISMATCH,
            f"'{method}' expects {format_type(decl.param_type)}, "
            f"got {format_type(argument.type)}",
            arg.span or span,
        )
    result = after.with_ref(target, replace(receiver, usage=advanced))
    return Typed(decl.return_type, result)


def _type_switch(
    ctx: TypeContext, state: TypingState, e: Switch, labels: LabelEnv
) -> Typed | None:
    scrut = type_expression(ctx, state, e.scrutinee, labels)
    if scrut is None:
        return None
    enum = scrut.type
    if not (isinstance(enum, BaseType) and ctx.program.is_enum(enum.name)):
        raise _error(
            DiagnosticCode.TYPE_MISMATCH,
            f"switch scrutinee has type {format_type(enum)}, expected an enum",
            e.scrutinee.span,
        )
    receiver = scrut.state.ref_type(e.target)
    if not isinstance(receiver, Typestate) or not isinstance(
        unfold(receiver.usage).body, Choice
    ):
        shown = format_type(receiver)
        raise _error(
            DiagnosticCode.SWITCH_LABEL_MISMATCH,
            f"'{e.target.name}' has type {shown}, which offers no choice to switch on",
            e.span,
        )
    choice = unfold(receiver.usage).body
    assert isinstance(choice, Choice)
    offered = {label for label, _ in choice.labels}
    handled = {label for label, _ in e.branches}
    owners = {ctx.program.label_owner.get(label) for label in offered}
    if offered != handled or owners != {enum.name}:
        raise _error(
            DiagnosticCode.SWITCH_LABEL_MISMATCH,
            f"switch handles {sorted(handled)} but the usage offers {sorted(offered)}",
            e.span,
        )
    arms: list[Typed | None] = []
    for label, body in e.branches:
        cont = step_label(receiver.usage, label)
        assert cont is not None
        entry = scrut.state.with_ref(e.target, replace(receiver, usage=cont))
        arms.append(type_expression(ctx, entry, body, labels))
    return _join(arms, e.span, "the branches of 'switch'")


def _type_return(
    ctx: TypeContext, state: TypingState, body: Expr, span: SourceSpan | None
) -> Typed | None:
    if len(state.stack) < 2:
        raise _error(
            DiagnosticCode.WELL_TYPED_STACK,
            "return{...} needs a caller frame below the callee frame",
            span,
        )
    bottom, inner_stack = state.stack[0], state.stack[1:]
    inner = type_expression(ctx, replace(state, stack=inner_stack), body)
    if inner is None:
        return None
    callee = inner.state.stack[-1]
    if not terminated_type(callee.type):
        raise _error(
            DiagnosticCode.PARAMETER_MISUSED,
            f"parameter '{callee.param}' still holds {format_type(callee.type)} "
            "when the method returns",
            span,
        )
    rest = (bottom, *inner.state.stack[:-1])
    return Typed(inner.type, replace(inner.state, stack=rest))


# --------------------------------------------------------------------------
# Class usages
# --------------------------------------------------------------------------


class UsageChecker:
    """Types a class by simulating its usage from a field type environment.

    ``trace`` records the usage rules applied, depth-first.
    """

    def __init__(self, ctx: TypeContext, view: ClassInfo, span: SourceSpan | None = None) -> None:
        self.ctx = ctx
        self.view = view
        self.span = span
        self.trace: list[str] = []

    def check(
        self,
        usage: Usage,
        env: FieldTypeEnv,
        theta: Mapping[str, FieldTypeEnv] | None = None,
    ) -> FieldTypeEnv | None:
        """Field types after following ``usage`` to completion.

        Returns ``None`` when every path returns to a recursion variable.
        """
        theta = theta or {}
        body = usage.body
        match body:
            case End() | TopUsage():
                self.trace.append("TCEn")
                return env
            case UsageVar(name):
                if name in theta:
                    self.trace.append("TCVar")
                    if dict(theta[name]) != dict(env):
                        raise _error(
                            DiagnosticCode.USAGE_RECURSION_MISMATCH,
                            f"fields of '{self.view.class_name}' differ on returning to "
                            f"usage variable '{name}'",
                            self.span,
                            *_env_difference(theta[name], env),
                        )
                    return None
                self.trace.append("TCRec")
                equation = usage.equation_map[name]
                return self.check(usage.with_body(equation), env, {**theta, name: env})
            case Choice(labels):
                self.trace.append("TCCh")
                arms = [
                    self.check(usage.with_body(cont), env, theta) for _, cont in labels
                ]
                return self._join_envs(arms, "choice branches")
            case Branch(methods):
                if not methods:
                    raise _error(
                        DiagnosticCode.EMPTY_BRANCH,
                        f"usage of '{self.view.class_name}' has an empty branch",
                        self.span,
                    )
                self.trace.append("TCBr")
                results: list[FieldTypeEnv | None] = []
                for name, cont in methods:
                    after = self.check_method(name, env)
                    results.append(self.check(usage.with_body(cont), after, theta))
                return self._join_envs(results, "methods of a branch")
        raise AssertionError(f"unhandled usage {body!r}")  # pragma: no cover

    def check_method(self, name: str, env: FieldTypeEnv) -> FieldTypeEnv:
        """Type the body of method ``name`` from field types ``env``."""
        method = self.view.methods[name]
        entry = ObjectEntry(self.view.class_name, self.view.arg, dict(env))
        state = TypingState(
            lam={THIS: entry},
            stack=(Frame(THIS, method.param_name, method.param_type),),
        )
        logger.debug("checking %s.%s", self.view.class_name, name)
        result = type_expression(self.ctx, state, method.body)
        if result is None:
            return env
        if result.type != method.return_type:
            raise _error(
                DiagnosticCode.TYPE_MISMATCH,
                f"body of '{name}' has type {format_type(result.type)}, "
                f"declared {format_type(method.return_type)}",
                method.span,
            )
        param = result.state.stack[-1]
        if not terminated_type(param.type):
            raise _error(
                DiagnosticCode.PARAMETER_MISUSED,
                f"parameter '{param.param}' of '{name}' still holds "
                f"{format_type(param.type)} at the end of the body",
                method.span,
            )
        return result.state.lam[THIS].fields

    def _join_envs(
        self, results: list[FieldTypeEnv | None], what: str
    ) -> FieldTypeEnv | None:
        live = [r for r in results if r is not None]
        if not live:
            return None
        for other in live[1:]:
            if dict(other) != dict(live[0]):
                raise _error(
                    DiagnosticCode.BRANCH_MISMATCH,
                    f"{what} of '{self.view.class_name}' end with different field types",
                    self.span,
                    *_env_difference(live[0], other),
                )
        return live[0]


def _env_difference(a: FieldTypeEnv, b: FieldTypeEnv) -> list[str]:
    return [
        f"field '{name}': {format_type(a[name])} versus {format_type(b[name])}"
        for name in sorted(set(a) & set(b))
        if a[name] != b[name]
    ]


def type_class_usage(
    ctx: TypeContext,
    view: ClassInfo,
    usage: Usage,
    env: FieldTypeEnv,
    span: SourceSpan | None = None,
) -> tuple[FieldTypeEnv | None, list[str]]:
    """Follow ``usage`` from ``env``; returns the final fields and rule trace."""
    checker = UsageChecker(ctx, view, span)
    return checker.check(usage, env), checker.trace


# --------------------------------------------------------------------------
# Classes and programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassCheck:
    """Outcome of typing one class.

    Attributes:
        name: Class name
        diagnostics: Problems found (empty when the class is well typed)
        trace: Usage rules applied, depth-first
        final_env: Field types after the usage completes, if any path does
    """

    name: str
    diagnostics: tuple[Diagnostic, ...]
    trace: tuple[str, ...]
    final_env: FieldTypeEnv | None

    @property
    def ok(self) -> bool:
        return not self.diagnostics


@dataclass(frozen=True)
class ProgramCheck:
    """Outcome of typing a whole program."""

    classes: tuple[ClassCheck, ...]

    @property
    def diagnostics(self) -> list[Diagnostic]:
        return sort_diagnostics([d for c in self.classes for d in c.diagnostics])

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.classes)

    def trace_of(self, name: str) -> tuple[str, ...]:
        for c in self.classes:
            if c.name == name:
                return c.trace
        raise KeyError(name)


def type_class(program: Program, decl: ClassDecl, ctx: TypeContext | None = None) -> ClassCheck:
    """Type ``decl``; generic classes are checked at the top type."""
    ctx = ctx or TypeContext(program)
    arg = TOP_TYPE if decl.is_generic else BOTTOM
    checker: UsageChecker | None = None
    try:
        view = ctx.view(decl.name, arg, decl.span)
        checker = UsageChecker(ctx, view, decl.span)
        final = checker.check(decl.usage, init_types(view.fields))
    except DiagnosticError as e:
        trace = tuple(checker.trace) if checker else ()
        return ClassCheck(decl.name, e.diagnostics, trace, None)
    trace = tuple(checker.trace)
    if final is None:
        logger.warning(
            "usage of class '%s' never reaches end; accepting its recursion", decl.name
        )
        return ClassCheck(decl.name, (), trace, None)
    if not terminated_field_env(final):
        lingering = sorted(name for name, t in final.items() if not terminated_type(t))
        diagnostic = Diagnostic.error(
            DiagnosticCode.NON_TERMINATED_AFTER_USAGE,
            f"fields {', '.join(repr(f) for f in lingering)} of '{decl.name}' "
            "are still in use when its usage ends",
            decl.span,
            *(f"field '{f}': {format_type(final[f])}" for f in lingering),
        )
        return ClassCheck(decl.name, (diagnostic,), trace, final)
    return ClassCheck(decl.name, (), trace, final)


def type_program(program: Program) -> ProgramCheck:
    """Type every class of ``program``."""
    ctx = TypeContext(program)
    results: list[ClassCheck] = []
    for decl in program.classes:
        result = type_class(program, decl, ctx)
        logger.debug(
            "class %s: %s", decl.name, "ok" if result.ok else f"{len(result.diagnostics)} errors"
        )
        results.append(result)
    return ProgramCheck(tuple(results))
