"""Typing of run-time configurations.

A configuration is well typed when every object holds exactly the fields its
class declares, the field, parameter and object environments agree with the
values in the heap, the expression types against them, and every object's
remaining protocol can still be completed from the field types the
expression leaves behind. Environments not supplied are rebuilt from the heap.
"""

import logging
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from mungo.errors import Diagnostic, DiagnosticCode, DiagnosticError, MungoError
from mungo.interpreter import Configuration, get_type
from mungo.printer import format_type, format_usage
from mungo.syntax import (
    ObjectRef,
    Program,
    TypeExpr,
    Usage,
    class_info,
    objects_of,
    returns_of,
    terminated_field_env,
    terminated_type,
)
from mungo.typechecker import (
    Frame,
    ObjectEntry,
    TypeContext,
    TypingState,
    type_class_usage,
    type_expression,
)

logger = logging.getLogger(__name__)

_CacheKey = tuple[str, TypeExpr, Usage, tuple[tuple[str, TypeExpr], ...]]


@dataclass
class WellTypedChecker:
    """Checks configurations of one program, memoising usage simulations.

    Attributes:
        program: The program being run
        cache: Results of completing an object's protocol from given field types
    """

    program: Program
    cache: dict[_CacheKey, str | None] = field(default_factory=dict)
    ctx: TypeContext = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.ctx = TypeContext(self.program)

    def initial_state(
        self,
        config: Configuration,
        lam: Mapping[str, ObjectEntry] | None = None,
        objects: Mapping[str, TypeExpr] | None = None,
        frames: Sequence[Frame] | None = None,
    ) -> tuple[TypingState, list[Diagnostic]]:
        """Environments for ``config`` with the heap, stack and object checks.

        Environments that are not given are derived from the heap. Given ones
        must agree with the types of the values they describe.
        """
        problems: list[Diagnostic] = []
        derived_lam = self._heap_types(config, problems)
        if lam is None:
            lam = derived_lam
        else:
            self._check_lam(lam, derived_lam, problems)

        derived_frames = self._stack_types(config, problems)
        if frames is None:
            frames = derived_frames
        else:
            self._check_frames(config, frames, problems)

        derived_objects = self._object_types(config, problems)
        if objects is None:
            objects = derived_objects
        else:
            self._check_objects(derived_objects, objects, problems)
        return TypingState(dict(lam), dict(objects), tuple(frames)), problems

    def _heap_types(
        self, config: Configuration, problems: list[Diagnostic]
    ) -> dict[str, ObjectEntry]:
        heap = config.heap
        lam: dict[str, ObjectEntry] = {}
        for oid, entry in heap.items():
            ts = entry.typestate
            try:
                declared = set(class_info(self.program, ts.class_name, ts.arg).fields)
            except MungoError as e:
                problems.append(_diag(DiagnosticCode.WELL_TYPED_HEAP, f"object '{oid}': {e}"))
                declared = set(entry.fields)
            if set(entry.fields) != declared:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_HEAP,
                        f"object '{oid}' has fields {_names(entry.fields)}"
                        f" but class '{ts.class_name}' declares {_names(declared)}",
                    )
                )
            fields: dict[str, TypeExpr] = {}
            for name, v in entry.fields.items():
                t = get_type(v, heap, self.program)
                if t is None:
                    problems.append(
                        _diag(
                            DiagnosticCode.WELL_TYPED_HEAP,
                            f"field '{name}' of '{oid}' refers to a missing object",
                        )
                    )
                    continue
                fields[name] = t
            lam[oid] = ObjectEntry(ts.class_name, ts.arg, fields)
        return lam

    @staticmethod
    def _check_lam(
        lam: Mapping[str, ObjectEntry],
        derived: Mapping[str, ObjectEntry],
        problems: list[Diagnostic],
    ) -> None:
        if set(lam) != set(derived):
            problems.append(
                _diag(
                    DiagnosticCode.WELL_TYPED_HEAP,
                    f"field typing covers {_names(lam)} but the heap holds {_names(derived)}",
                )
            )
        for oid in sorted(set(lam) & set(derived)):
            given, actual = lam[oid], derived[oid]
            if (given.class_name, given.arg) != (actual.class_name, actual.arg):
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_HEAP,
                        f"field typing views '{oid}' as class '{given.class_name}'"
                        f" but it is a '{actual.class_name}'",
                    )
                )
                continue
            if set(given.fields) != set(actual.fields):
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_HEAP,
                        f"field typing of '{oid}' names {_names(given.fields)}"
                        f" but it holds {_names(actual.fields)}",
                    )
                )
            for name in sorted(set(given.fields) & set(actual.fields)):
                if given.fields[name] != actual.fields[name]:
                    problems.append(
                        _diag(
                            DiagnosticCode.WELL_TYPED_HEAP,
                            f"field '{name}' of '{oid}' is typed"
                            f" {format_type(given.fields[name])}"
                            f" but holds a value of type {format_type(actual.fields[name])}",
                        )
                    )

    def _stack_types(self, config: Configuration, problems: list[Diagnostic]) -> list[Frame]:
        heap = config.heap
        frames: list[Frame] = []
        for frame in config.stack:
            t = get_type(frame.value, heap, self.program)
            if frame.obj not in heap or t is None:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_STACK,
                        f"frame of '{frame.obj}' has an untypable binding",
                    )
                )
                continue
            frames.append(Frame(frame.obj, frame.param, t))
        expected = 1 + len(returns_of(config.expr))
        if len(config.stack) != expected:
            problems.append(
                _diag(
                    DiagnosticCode.WELL_TYPED_STACK,
                    f"{len(config.stack)} frames for {expected - 1} pending returns",
                )
            )
        return frames

    def _check_frames(
        self, config: Configuration, frames: Sequence[Frame], problems: list[Diagnostic]
    ) -> None:
        if len(frames) != len(config.stack):
            problems.append(
                _diag(
                    DiagnosticCode.WELL_TYPED_STACK,
                    f"{len(frames)} typed frames for {len(config.stack)} run-time frames",
                )
            )
            return
        for depth, (typed, frame) in enumerate(zip(frames, config.stack, strict=True)):
            actual = get_type(frame.value, config.heap, self.program)
            if (typed.obj, typed.param) != (frame.obj, frame.param) or typed.type != actual:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_STACK,
                        f"frame {depth} is typed as {typed.obj}.{typed.param}:"
                        f" {format_type(typed.type)} but binds {frame.obj}.{frame.param}",
                    )
                )

    @staticmethod
    def _object_types(config: Configuration, problems: list[Diagnostic]) -> dict[str, TypeExpr]:
        objects: dict[str, TypeExpr] = {}
        for oid, n in Counter(objects_of(config.expr)).items():
            t = get_type(ObjectRef(oid), config.heap)
            if t is None or n > 1:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_OBJECTS,
                        f"object '{oid}' is missing from the heap or occurs {n} times",
                    )
                )
                continue
            objects[oid] = t
        return objects

    @staticmethod
    def _check_objects(
        derived: Mapping[str, TypeExpr],
        objects: Mapping[str, TypeExpr],
        problems: list[Diagnostic],
    ) -> None:
        if set(objects) != set(derived):
            problems.append(
                _diag(
                    DiagnosticCode.WELL_TYPED_OBJECTS,
                    f"object typing covers {_names(objects)}"
                    f" but the expression holds {_names(derived)}",
                )
            )
        for oid in sorted(set(objects) & set(derived)):
            if objects[oid] != derived[oid]:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_OBJECTS,
                        f"object '{oid}' is typed {format_type(objects[oid])}"
                        f" but is a {format_type(derived[oid])}",
                    )
                )

    def check(
        self,
        config: Configuration,
        lam: Mapping[str, ObjectEntry] | None = None,
        objects: Mapping[str, TypeExpr] | None = None,
        frames: Sequence[Frame] | None = None,
    ) -> list[Diagnostic]:
        """Every reason ``config`` is not well typed; empty when it is."""
        state, problems = self.initial_state(config, lam, objects, frames)
        if problems:
            return problems
        try:
            result = type_expression(self.ctx, state, config.expr)
        except DiagnosticError as e:
            return [
                _diag(
                    DiagnosticCode.WELL_TYPED_EXPRESSION,
                    f"{d.code}: {d.message}",
                    *d.notes,
                )
                for d in e.diagnostics
            ]
        if result is None:
            # the remaining evaluation never completes
            return []
        return self.check_declarations(config, result.state.lam)

    def check_declarations(
        self, config: Configuration, lam: Mapping[str, ObjectEntry]
    ) -> list[Diagnostic]:
        """Each object's remaining usage must complete from its field types."""
        problems: list[Diagnostic] = []
        for oid in sorted(config.heap):
            usage = config.heap[oid].typestate.usage
            entry = lam[oid]
            reason = self._complete(entry, usage)
            if reason is not None:
                problems.append(
                    _diag(
                        DiagnosticCode.WELL_TYPED_DECLARATIONS,
                        f"object '{oid}' at usage {format_usage(usage)}: {reason}",
                    )
                )
        return problems

    def _complete(self, entry: ObjectEntry, usage: Usage) -> str | None:
        key: _CacheKey = (
            entry.class_name,
            entry.arg,
            usage,
            tuple(sorted(entry.fields.items(), key=lambda kv: kv[0])),
        )
        if key in self.cache:
            return self.cache[key]
        reason: str | None = None
        try:
            view = self.ctx.view(entry.class_name, entry.arg)
            final, _ = type_class_usage(self.ctx, view, usage, entry.fields)
        except DiagnosticError as e:
            reason = f"{e.diagnostics[0].code}: {e.diagnostics[0].message}"
        else:
            if final is not None and not terminated_field_env(final):
                lingering = ", ".join(
                    f"{k}: {format_type(t)}"
                    for k, t in sorted(final.items())
                    if not terminated_type(t)
                )
                reason = f"fields not terminated at end ({lingering})"
        self.cache[key] = reason
        return reason


def _diag(code: DiagnosticCode, message: str, *notes: str) -> Diagnostic:
    return Diagnostic.error(code, message, None, *notes)


def _names(names: Iterable[str]) -> str:
    return "{" + ", ".join(sorted(names)) + "}"


def well_typed_configuration(
    program: Program,
    config: Configuration,
    *,
    lam: Mapping[str, ObjectEntry] | None = None,
    objects: Mapping[str, TypeExpr] | None = None,
    frames: Sequence[Frame] | None = None,
) -> list[Diagnostic]:
    """One-off form of :meth:`WellTypedChecker.check`.

    Args:
        program: The program being run
        config: The configuration to check
        lam: Field types per object; derived from the heap when omitted
        objects: Types of the objects free in the expression; derived when omitted
        frames: Parameter type frames, bottom first; derived when omitted

    Returns:
        Every reason ``config`` is not well typed, empty when it is
    """
    return WellTypedChecker(program).check(config, lam, objects, frames)
