"""Run-time error predicates.

:func:`check_error` classifies the faults a well-typed program can never
reach: calls on ``null``, calls the receiver's protocol does not allow, and
accesses to missing fields. It looks only at the active position of the
expression, descending through composite forms the same way reduction does.
"""

import logging
from dataclasses import dataclass

from mungo.errors import Taxonomy
from mungo.interpreter import Configuration, RuntimeFrame, StuckReason
from mungo.printer import format_expr
from mungo.syntax import (
    Assign,
    Call,
    Expr,
    If,
    Lit,
    NullValue,
    ObjectRef,
    Ref,
    RefKind,
    Return,
    Seq,
    Switch,
    Value,
)
from mungo.usages import step_method

logger = logging.getLogger(__name__)

EXCERPT_WIDTH = 60

FAULT_TAXONOMY: dict[StuckReason, Taxonomy] = {
    StuckReason.NULL_CALL_FIELD: Taxonomy.FIELD_NOT_AVAILABLE,
    StuckReason.NULL_CALL_PARAM: Taxonomy.PARAMETER_NOT_AVAILABLE,
    StuckReason.METHOD_NOT_AVAILABLE_FIELD: Taxonomy.METHOD_NOT_AVAILABLE,
    StuckReason.METHOD_NOT_AVAILABLE_PARAM: Taxonomy.METHOD_NOT_AVAILABLE,
    StuckReason.FIELD_ERROR: Taxonomy.FIELD_NOT_AVAILABLE,
}


@dataclass(frozen=True)
class RuntimeFault:
    """A detected run-time error.

    Attributes:
        kind: Which error predicate holds
        path: Composite rules descended through, outermost first
        expr: The offending subexpression
    """

    kind: StuckReason
    path: tuple[str, ...]
    expr: Expr

    @property
    def taxonomy(self) -> Taxonomy:
        return FAULT_TAXONOMY[self.kind]

    def report(self, step: int) -> str:
        excerpt = format_expr(self.expr)
        if len(excerpt) > EXCERPT_WIDTH:
            excerpt = excerpt[: EXCERPT_WIDTH - 3] + "..."
        return f"runtime-error: {self.kind} ({self.taxonomy}) at step {step}: {excerpt}"


class _Found(Exception):
    def __init__(self, kind: StuckReason, expr: Expr) -> None:
        super().__init__(kind)
        self.kind = kind
        self.expr = expr


def _lookup(config: Configuration, frame: RuntimeFrame, ref: Ref, at: Expr) -> Value:
    if ref.kind is RefKind.PARAM:
        return frame.value
    fields = config.heap[frame.obj].fields
    if ref.name not in fields:
        raise _Found(StuckReason.FIELD_ERROR, at)
    return fields[ref.name]


def _check_call(config: Configuration, frame: RuntimeFrame, e: Call) -> None:
    is_param = e.target.kind is RefKind.PARAM
    v = _lookup(config, frame, e.target, e)
    if isinstance(v, NullValue):
        raise _Found(
            StuckReason.NULL_CALL_PARAM if is_param else StuckReason.NULL_CALL_FIELD, e
        )
    if isinstance(v, ObjectRef) and v.oid in config.heap:
        usage = config.heap[v.oid].typestate.usage
        if step_method(usage, e.method) is None:
            raise _Found(
                StuckReason.METHOD_NOT_AVAILABLE_PARAM
                if is_param
                else StuckReason.METHOD_NOT_AVAILABLE_FIELD,
                e,
            )


def _descend(
    config: Configuration,
    stack: tuple[RuntimeFrame, ...],
    e: Expr,
    path: list[str],
) -> None:
    frame = stack[-1]
    match e:
        case Ref(_, RefKind.FIELD):
            _lookup(config, frame, e, e)
        case Assign(_, Lit()):
            _lookup(config, frame, Ref(e.field_name, RefKind.FIELD), e)
        case Assign(_, value):
            path.append("FldCErr")
            _descend(config, stack, value, path)
        case Call(_, _, Lit()):
            _check_call(config, frame, e)
        case Call(_, _, arg):
            path.append("CallCErr")
            _descend(config, stack, arg, path)
        case Seq(first, _) if not isinstance(first, Lit):
            path.append("SeqCErr")
            _descend(config, stack, first, path)
        case If(cond, _, _) if not isinstance(cond, Lit):
            path.append("IfCErr")
            _descend(config, stack, cond, path)
        case Switch(_, _, scrutinee, _) if not isinstance(scrutinee, Lit):
            path.append("SwCErr")
            _descend(config, stack, scrutinee, path)
        case Return(body) if not isinstance(body, Lit) and len(stack) > 1:
            path.append("RetCErr")
            _descend(config, stack[1:], body, path)
        case _:
            return


def check_error(config: Configuration) -> RuntimeFault | None:
    """The run-time error ``config`` exhibits, if any."""
    if not config.stack:
        return None
    path: list[str] = []
    try:
        _descend(config, config.stack, config.expr, path)
    except _Found as found:
        fault = RuntimeFault(found.kind, tuple(path), found.expr)
        logger.debug("runtime fault %s via %s", fault.kind, "/".join(path) or "-")
        return fault
    return None
