"""Abstract syntax of Mungo programs and the pure predicates shared by the
checker and the interpreter.

All nodes are frozen dataclasses. Source spans ride along on every
expression and declaration but never take part in equality, so a program
printed and parsed again compares equal to the original.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import TypeAlias

from mungo.config import TOP_CLASS
from mungo.errors import (
    ArityMismatchError,
    SourceSpan,
    UnknownClassError,
)


@dataclass(frozen=True)
class Node:
    """Base for syntax nodes that carry an optional source span."""

    span: SourceSpan | None = field(
        default=None, compare=False, repr=False, kw_only=True
    )


# --------------------------------------------------------------------------
# Usages
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """``{m1; w1 ... mk; wk}``: any listed method may be called next."""

    methods: tuple[tuple[str, UsageBody], ...]

    def continuation(self, method: str) -> UsageBody | None:
        for name, body in self.methods:
            if name == method:
                return body
        return None


@dataclass(frozen=True)
class Choice:
    """``<l1: u1 ... lk: uk>``: the protocol continues according to a label."""

    labels: tuple[tuple[str, UsageBody], ...]

    def continuation(self, label: str) -> UsageBody | None:
        for name, body in self.labels:
            if name == label:
                return body
        return None


@dataclass(frozen=True)
class UsageVar:
    """A recursion variable bound by the equation set."""

    name: str


@dataclass(frozen=True)
class End:
    """The terminated usage."""


@dataclass(frozen=True)
class TopUsage:
    """The usage of the top class: not ``end``, yet without transitions."""


UsageBody: TypeAlias = Branch | Choice | UsageVar | End | TopUsage

END = End()
TOP_USAGE_BODY = TopUsage()


def free_usage_vars(body: UsageBody) -> Iterator[str]:
    """Yield every usage variable occurring in ``body``."""
    match body:
        case UsageVar(name):
            yield name
        case Branch(items) | Choice(items):
            for _, cont in items:
                yield from free_usage_vars(cont)
        case _:
            return


@dataclass(frozen=True)
class Usage:
    """A usage body paired with its equation set.

    The equation set is kept canonical: sorted by variable name, with
    equations unreachable from the body dropped. Two usages are equal
    exactly when their canonical forms are structurally equal.
    """

    body: UsageBody
    equations: tuple[tuple[str, UsageBody], ...] = ()

    def __post_init__(self) -> None:
        defined = dict(self.equations)
        reachable: set[str] = set()
        pending = list(free_usage_vars(self.body))
        while pending:
            name = pending.pop()
            if name in reachable:
                continue
            reachable.add(name)
            if name in defined:
                pending.extend(free_usage_vars(defined[name]))
        canonical = tuple(
            sorted((k, v) for k, v in defined.items() if k in reachable)
        )
        object.__setattr__(self, "equations", canonical)

    @cached_property
    def equation_map(self) -> dict[str, UsageBody]:
        """Equations as a mapping from variable to right-hand side."""
        return dict(self.equations)

    def with_body(self, body: UsageBody) -> Usage:
        """The usage ``body`` under this usage's equations."""
        return Usage(body, self.equations)

    @property
    def is_end(self) -> bool:
        return isinstance(self.body, End)


END_USAGE = Usage(END)
TOP_USAGE = Usage(TOP_USAGE_BODY)


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseType:
    """``void``, ``bool`` or the name of an enum."""

    name: str


@dataclass(frozen=True)
class Bottom:
    """The type of ``null``; also the argument of non-generic classes."""


@dataclass(frozen=True)
class Typestate:
    """``C<t>[U]``: an object of class ``C`` whose protocol is at ``U``."""

    class_name: str
    arg: TypeExpr
    usage: Usage


@dataclass(frozen=True)
class GenericVar:
    """``A[b]``: the class and usage parameters of a generic class."""

    class_var: str
    usage_var: str


TypeExpr: TypeAlias = BaseType | Typestate | GenericVar | Bottom

VOID = BaseType("void")
BOOL = BaseType("bool")
BOTTOM = Bottom()
TOP_TYPE = Typestate(TOP_CLASS, BOTTOM, TOP_USAGE)


@dataclass(frozen=True)
class ClassRef:
    """Declared field type ``C<t>``; ``arg`` is ``BOTTOM`` for plain classes."""

    name: str
    arg: TypeExpr = BOTTOM


@dataclass(frozen=True)
class ClassVar:
    """Declared field type naming the class parameter of a generic class."""

    name: str


DeclaredType: TypeAlias = BaseType | ClassRef | ClassVar


# --------------------------------------------------------------------------
# Values and expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitValue:
    pass


@dataclass(frozen=True)
class BoolValue:
    value: bool


@dataclass(frozen=True)
class LabelValue:
    label: str


@dataclass(frozen=True)
class NullValue:
    pass


@dataclass(frozen=True)
class ObjectRef:
    """A run-time object identity minted by the interpreter."""

    oid: str


Value: TypeAlias = UnitValue | BoolValue | LabelValue | NullValue | ObjectRef

UNIT = UnitValue()
TRUE = BoolValue(True)
FALSE = BoolValue(False)
NULL = NullValue()


class RefKind(StrEnum):
    """What a bare name in a method body resolves to."""

    FIELD = "field"
    PARAM = "param"


@dataclass(frozen=True)
class Lit(Node):
    value: Value


@dataclass(frozen=True)
class Ref(Node):
    name: str
    kind: RefKind


@dataclass(frozen=True)
class New(Node):
    class_name: str


@dataclass(frozen=True)
class NewGen(Node):
    class_name: str
    arg: TypeExpr


@dataclass(frozen=True)
class Assign(Node):
    field_name: str
    value: Expr


@dataclass(frozen=True)
class Call(Node):
    target: Ref
    method: str
    arg: Expr


@dataclass(frozen=True)
class Seq(Node):
    first: Expr
    second: Expr


@dataclass(frozen=True)
class If(Node):
    cond: Expr
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class Switch(Node):
    """``switch_{r.m}(e) {l: e ...}``; in source ``e`` is the call ``r.m(...)``."""

    target: Ref
    method: str
    scrutinee: Expr
    branches: tuple[tuple[str, Expr], ...]

    def branch(self, label: str) -> Expr | None:
        for name, body in self.branches:
            if name == label:
                return body
        return None


@dataclass(frozen=True)
class Labelled(Node):
    label: str
    body: Expr


@dataclass(frozen=True)
class Continue(Node):
    label: str


@dataclass(frozen=True)
class Return(Node):
    """Run-time wrapper around an executing method body."""

    body: Expr


Expr: TypeAlias = (
    Lit
    | Ref
    | New
    | NewGen
    | Assign
    | Call
    | Seq
    | If
    | Switch
    | Labelled
    | Continue
    | Return
)


def children(e: Expr) -> Iterator[Expr]:
    """Direct subexpressions of ``e`` in left-to-right order."""
    match e:
        case Assign(_, value):
            yield value
        case Call(target, _, arg):
            yield target
            yield arg
        case Seq(first, second):
            yield first
            yield second
        case If(cond, then, orelse):
            yield cond
            yield then
            yield orelse
        case Switch(target, _, scrutinee, branches):
            yield target
            yield scrutinee
            for _, body in branches:
                yield body
        case Labelled(_, body) | Return(body):
            yield body
        case _:
            return


def walk(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal of ``e``."""
    yield e
    for child in children(e):
        yield from walk(child)


# --------------------------------------------------------------------------
# Declarations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EnumDecl(Node):
    name: str
    labels: tuple[str, ...]


@dataclass(frozen=True)
class FieldDecl(Node):
    name: str
    type: DeclaredType


@dataclass(frozen=True)
class MethodDecl(Node):
    name: str
    param_name: str
    param_type: TypeExpr
    return_type: TypeExpr
    body: Expr


@dataclass(frozen=True)
class ClassDecl(Node):
    name: str
    generic: tuple[str, str] | None
    usage: Usage
    fields: tuple[FieldDecl, ...]
    methods: tuple[MethodDecl, ...]

    @cached_property
    def method_map(self) -> dict[str, MethodDecl]:
        return {m.name: m for m in self.methods}

    @cached_property
    def field_map(self) -> dict[str, DeclaredType]:
        return {f.name: f.type for f in self.fields}

    @property
    def is_generic(self) -> bool:
        return self.generic is not None


@dataclass(frozen=True)
class Program(Node):
    enums: tuple[EnumDecl, ...]
    classes: tuple[ClassDecl, ...]

    @cached_property
    def class_map(self) -> dict[str, ClassDecl]:
        return {c.name: c for c in self.classes}

    @cached_property
    def enum_map(self) -> dict[str, EnumDecl]:
        return {e.name: e for e in self.enums}

    @cached_property
    def label_owner(self) -> dict[str, str]:
        """Map each enum label to the enum declaring it."""
        return {label: e.name for e in self.enums for label in e.labels}

    def class_decl(self, name: str) -> ClassDecl:
        try:
            return self.class_map[name]
        except KeyError:
            raise UnknownClassError(name) from None

    def is_enum(self, name: str) -> bool:
        return name in self.enum_map


# --------------------------------------------------------------------------
# Predicates
# --------------------------------------------------------------------------


def lin_type(t: TypeExpr) -> bool:
    """A typestate whose usage is not ``end``, or a generic parameter."""
    match t:
        case Typestate(_, _, usage):
            return not usage.is_end
        case GenericVar():
            return True
        case _:
            return False


def terminated_type(t: TypeExpr) -> bool:
    return not lin_type(t)


def terminated_field_env(env: Mapping[str, TypeExpr]) -> bool:
    return all(terminated_type(t) for t in env.values())


def agree(declared: DeclaredType, actual: TypeExpr) -> bool:
    """Whether a value of type ``actual`` may be stored in a ``declared`` field.

    Usages are ignored: a field of class ``C<t>`` holds ``C<t>[W]`` for any
    ``W``, and ``null`` fits every class-typed field.
    """
    match declared, actual:
        case BaseType(a), BaseType(b):
            return a == b
        case ClassRef(name, arg), Typestate(cls, targ, _):
            return name == cls and arg == targ
        case ClassRef(), Bottom():
            return True
        case ClassVar(name), GenericVar(cvar, _):
            return name == cvar
        case ClassVar(), Bottom():
            return True
        case _:
            return False


# --------------------------------------------------------------------------
# Class information
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassInfo:
    """Methods, fields and usage of a class viewed at a given type argument.

    Attributes:
        class_name: Name of the class
        arg: The type argument (``BOTTOM`` for plain classes)
        usage: The declared usage, unchanged by substitution
        fields: Declared field types after substitution, in declaration order
        methods: Method declarations after substitution
    """

    class_name: str
    arg: TypeExpr
    usage: Usage
    fields: Mapping[str, DeclaredType]
    methods: Mapping[str, MethodDecl]

    @property
    def initial_type(self) -> Typestate:
        """The typestate of a freshly created instance."""
        return Typestate(self.class_name, self.arg, self.usage)


TOP_CLASS_INFO = ClassInfo(TOP_CLASS, BOTTOM, TOP_USAGE, {}, {})


def _subst_type(t: TypeExpr, var: GenericVar, arg: TypeExpr) -> TypeExpr:
    match t:
        case GenericVar(cvar, _) if cvar == var.class_var:
            return arg
        case Typestate(name, targ, usage):
            return Typestate(name, _subst_type(targ, var, arg), usage)
        case _:
            return t


def _subst_declared(t: DeclaredType, var: GenericVar, arg: TypeExpr) -> DeclaredType:
    match t:
        case ClassVar(name) if name == var.class_var:
            match arg:
                case Typestate(cls, targ, _):
                    return ClassRef(cls, targ)
                case GenericVar(cvar, _):
                    return ClassVar(cvar)
                case _:
                    return t
        case ClassRef(name, targ):
            return ClassRef(name, _subst_type(targ, var, arg))
        case _:
            return t


def _subst_expr(e: Expr, var: GenericVar, arg: TypeExpr) -> Expr:
    match e:
        case NewGen(cls, targ):
            return NewGen(cls, _subst_type(targ, var, arg), span=e.span)
        case Assign(name, value):
            return Assign(name, _subst_expr(value, var, arg), span=e.span)
        case Call(target, method, carg):
            return Call(target, method, _subst_expr(carg, var, arg), span=e.span)
        case Seq(first, second):
            return Seq(
                _subst_expr(first, var, arg),
                _subst_expr(second, var, arg),
                span=e.span,
            )
        case If(cond, then, orelse):
            return If(
                _subst_expr(cond, var, arg),
                _subst_expr(then, var, arg),
                _subst_expr(orelse, var, arg),
                span=e.span,
            )
        case Switch(target, method, scrutinee, branches):
            return Switch(
                target,
                method,
                _subst_expr(scrutinee, var, arg),
                tuple((lbl, _subst_expr(b, var, arg)) for lbl, b in branches),
                span=e.span,
            )
        case Labelled(label, body):
            return Labelled(label, _subst_expr(body, var, arg), span=e.span)
        case Return(body):
            return Return(_subst_expr(body, var, arg), span=e.span)
        case _:
            return e


def substitute_class(decl: ClassDecl, arg: TypeExpr) -> ClassDecl:
    """Replace the class's generic parameter ``A[b]`` by ``arg`` throughout."""
    if decl.generic is None:
        return decl
    var = GenericVar(*decl.generic)
    fields = tuple(
        FieldDecl(f.name, _subst_declared(f.type, var, arg), span=f.span)
        for f in decl.fields
    )
    methods = tuple(
        MethodDecl(
            m.name,
            m.param_name,
            _subst_type(m.param_type, var, arg),
            _subst_type(m.return_type, var, arg),
            _subst_expr(m.body, var, arg),
            span=m.span,
        )
        for m in decl.methods
    )
    return ClassDecl(decl.name, None, decl.usage, fields, methods, span=decl.span)


def class_info(program: Program, name: str, arg: TypeExpr = BOTTOM) -> ClassInfo:
    """View class ``name`` at type argument ``arg``.

    Raises:
        UnknownClassError: If the class is not declared
        ArityMismatchError: If ``arg`` is given for a plain class or missing
            for a generic one
    """
    if name == TOP_CLASS:
        if not isinstance(arg, Bottom):
            raise ArityMismatchError(name, generic=False)
        return TOP_CLASS_INFO
    decl = program.class_decl(name)
    if decl.is_generic == isinstance(arg, Bottom):
        raise ArityMismatchError(name, generic=decl.is_generic)
    view = substitute_class(decl, arg)
    return ClassInfo(name, arg, decl.usage, view.field_map, view.method_map)


def init_vals(fields: Mapping[str, DeclaredType]) -> dict[str, Value]:
    """Initial field values: ``null`` for objects, ``false``, ``unit``."""
    values: dict[str, Value] = {}
    for name, t in fields.items():
        if t == BOOL:
            values[name] = FALSE
        elif t == VOID:
            values[name] = UNIT
        else:
            values[name] = NULL
    return values


def init_types(fields: Mapping[str, DeclaredType]) -> dict[str, TypeExpr]:
    """Initial field types: ``⊥`` for objects, ``bool``, ``void``."""
    types: dict[str, TypeExpr] = {}
    for name, t in fields.items():
        if isinstance(t, BaseType):
            types[name] = t
        else:
            types[name] = BOTTOM
    return types


# --------------------------------------------------------------------------
# Run-time expression structure
# --------------------------------------------------------------------------


def returns_of(e: Expr) -> list[Return]:
    """All ``return{...}`` subexpressions of ``e``, outermost first."""
    return [sub for sub in walk(e) if isinstance(sub, Return)]


def objects_of(e: Expr) -> list[str]:
    """Multiset of object identities occurring in ``e``."""
    return [
        sub.value.oid
        for sub in walk(e)
        if isinstance(sub, Lit) and isinstance(sub.value, ObjectRef)
    ]


def _returns_in_tail_positions(e: Expr) -> bool:
    for sub in walk(e):
        match sub:
            case Seq(_, second) if returns_of(second):
                return True
            case If(_, then, orelse) if returns_of(then) or returns_of(orelse):
                return True
            case Switch(_, _, _, branches) if any(returns_of(b) for _, b in branches):
                return True
            case _:
                pass
    return False


def well_formed_expression(e: Expr) -> bool:
    """Returns sit only in evaluation positions and objects occur once."""
    if _returns_in_tail_positions(e):
        return False
    objects = objects_of(e)
    if len(objects) != len(set(objects)):
        return False
    returns = returns_of(e)
    if returns:
        innermost = next(
            (r for r in reversed(returns) if not returns_of(r.body)), returns[-1]
        )
        if Counter(objects) != Counter(objects_of(innermost.body)):
            return False
    return True


def substitute_continue(e: Expr, label: str, replacement: Expr) -> Expr:
    """Replace every ``continue label`` in ``e`` by ``replacement``."""
    match e:
        case Continue(name) if name == label:
            return replacement
        case Labelled(name, _) if name == label:
            return e
        case Assign(name, value):
            return Assign(name, substitute_continue(value, label, replacement), span=e.span)
        case Call(target, method, arg):
            return Call(
                target, method, substitute_continue(arg, label, replacement), span=e.span
            )
        case Seq(first, second):
            return Seq(
                substitute_continue(first, label, replacement),
                substitute_continue(second, label, replacement),
                span=e.span,
            )
        case If(cond, then, orelse):
            return If(
                substitute_continue(cond, label, replacement),
                substitute_continue(then, label, replacement),
                substitute_continue(orelse, label, replacement),
                span=e.span,
            )
        case Switch(target, method, scrutinee, branches):
            return Switch(
                target,
                method,
                substitute_continue(scrutinee, label, replacement),
                tuple(
                    (lbl, substitute_continue(b, label, replacement))
                    for lbl, b in branches
                ),
                span=e.span,
            )
        case Labelled(name, body):
            return Labelled(name, substitute_continue(body, label, replacement), span=e.span)
        case Return(body):
            return Return(substitute_continue(body, label, replacement), span=e.span)
        case _:
            return e
