"""Tests for the small-step interpreter."""

from collections.abc import Callable
from dataclasses import replace

import pytest

from mungo.config import MAIN_OBJECT
from mungo.errors import InternalInvariantViolation
from mungo.interpreter import (
    Configuration,
    HeapEntry,
    RunStatus,
    RuntimeFrame,
    Stepped,
    Stuck,
    StuckReason,
    Terminal,
    configuration_digest,
    describe_configuration,
    get_type,
    initial_configuration,
    lin_value,
    linearity_violations,
    protocols_completed,
    run,
    step,
    well_formed_configuration,
)
from mungo.parser import parse_usage
from mungo.syntax import (
    BOOL,
    BOTTOM,
    END_USAGE,
    FALSE,
    NULL,
    TRUE,
    UNIT,
    VOID,
    BaseType,
    Continue,
    LabelValue,
    Lit,
    ObjectRef,
    Program,
    Ref,
    RefKind,
    Seq,
    Typestate,
)

PRESSER_CLASS = """
class Presser {
  {press; end}
  void press(Lamp[{on; end}] l) { l.on(); l.on() }
}
"""

LAMP_AT_START = Typestate("Lamp", BOTTOM, parse_usage("{on; end}"))


def lamp_config(program: Program, expr_oid: bool = True) -> Configuration:
    """Main holding a fresh lamp in its field, optionally also in the expression."""
    config = initial_configuration(program)
    heap = {
        MAIN_OBJECT: HeapEntry(config.heap[MAIN_OBJECT].typestate, {"lamp": ObjectRef("o1")}),
        "o1": HeapEntry(LAMP_AT_START, {}),
    }
    expr = Lit(ObjectRef("o1")) if expr_oid else Lit(UNIT)
    return Configuration(heap, config.stack, expr, next_id=2)


class TestValues:
    """Tests for get_type and lin_value."""

    def test_base_values(self) -> None:
        """Unit, booleans and null have fixed types."""
        assert get_type(UNIT, {}) == VOID
        assert get_type(TRUE, {}) == BOOL
        assert get_type(NULL, {}) == BOTTOM

    def test_label_needs_program(self, filereader: Program) -> None:
        """Labels are typed by their enum when a program is given."""
        assert get_type(LabelValue("EOF"), {}) is None
        assert get_type(LabelValue("EOF"), {}, filereader) == BaseType("FileStatus")

    def test_objects_typed_by_heap(self) -> None:
        """Objects take the typestate recorded in the heap."""
        heap = {"o1": HeapEntry(LAMP_AT_START, {})}

        assert get_type(ObjectRef("o1"), heap) == LAMP_AT_START
        assert get_type(ObjectRef("o7"), heap) is None
        assert lin_value(ObjectRef("o1"), heap)
        assert not lin_value(FALSE, heap)

    def test_finished_object_is_not_linear(self) -> None:
        """An object at end may be shared."""
        heap = {"o1": HeapEntry(replace(LAMP_AT_START, usage=END_USAGE), {})}
        assert not lin_value(ObjectRef("o1"), heap)


class TestInitialConfiguration:
    """Tests for initial_configuration and step."""

    def test_shape(self, filereader: Program) -> None:
        """Only Main exists, finished, with fields at their initial values."""
        config = initial_configuration(filereader)

        assert list(config.heap) == [MAIN_OBJECT]
        main = config.heap[MAIN_OBJECT]
        assert main.typestate.usage == END_USAGE
        assert main.fields == {"reader": NULL}
        assert config.stack == (RuntimeFrame(MAIN_OBJECT, "x", UNIT),)
        assert config.expr == filereader.class_map["Main"].method_map["main"].body
        assert well_formed_configuration(filereader, config) == []

    def test_first_step(self, filereader: Program) -> None:
        """The first reduction allocates the reader under two contexts."""
        result = step(filereader, initial_configuration(filereader))

        assert isinstance(result, Stepped)
        assert result.rules == ("SeqC", "FldC", "New")
        assert result.rule == "SeqC/FldC/New"
        assert set(result.configuration.heap) == {MAIN_OBJECT, "o1"}
        assert result.configuration.next_id == 2

    def test_value_is_terminal(self, filereader: Program) -> None:
        """A value in the main frame ends the run."""
        config = replace(initial_configuration(filereader), expr=Lit(TRUE))
        assert step(filereader, config) == Terminal(TRUE)

    def test_value_with_callee_frame_is_invariant_violation(self, filereader: Program) -> None:
        """A value with frames still pushed cannot be reached."""
        config = initial_configuration(filereader)
        config = replace(config, expr=Lit(UNIT), stack=(*config.stack, config.stack[0]))
        with pytest.raises(InternalInvariantViolation):
            step(filereader, config)


class TestRun:
    """Tests for whole runs."""

    def test_filereader_terminates(self, filereader: Program) -> None:
        """The file reader drains the file and closes it."""
        outcome = run(filereader, max_steps=1_000)

        assert outcome.status is RunStatus.TERMINAL
        assert outcome.kind == "Terminal"
        assert outcome.value == UNIT
        assert outcome.protocols_completed is True
        assert len(outcome.final.heap) == 3
        assert outcome.stuck is None

    def test_rule_counts(self, filereader: Program) -> None:
        """Every call returns and the loop runs three times."""
        counts = run(filereader, max_steps=1_000).rule_counts

        assert counts["CallF"] == counts["Ret"] == 9
        assert counts["New"] == 2
        assert counts["Lbl"] == counts["SwF"] == 3
        assert counts["IfTrue"] == 2
        assert counts["IfFls"] == 1

    def test_trace(self, filereader: Program) -> None:
        """Tracing records one entry per step."""
        outcome = run(filereader, max_steps=1_000, trace=True)

        assert len(outcome.trace) == outcome.steps
        first = outcome.trace[0]
        assert first.line() == "step 1: SeqC/FldC/New | .. ; .. | 2"
        assert len(first.digest) == 64

    def test_no_trace_by_default(self, filereader: Program) -> None:
        """Trace entries are only kept on request."""
        assert run(filereader, max_steps=1_000).trace == ()

    def test_budget(self, corpus_program: Callable[[str], Program]) -> None:
        """A non-terminating loop exhausts the budget."""
        outcome = run(corpus_program("infinite_loop"), max_steps=50)

        assert outcome.status is RunStatus.BUDGET
        assert outcome.kind == "Budget"
        assert outcome.steps == 50
        assert outcome.protocols_completed is None

    def test_observer_sees_every_configuration(self, filereader: Program) -> None:
        """The observer is called before each step, including the last."""
        seen: list[int] = []
        outcome = run(filereader, 1_000, observer=lambda n, _: seen.append(n))
        assert seen == list(range(outcome.steps + 1))

    def test_reachable_configurations_well_formed(self, filereader: Program) -> None:
        """Every configuration of the run is well formed and linear."""

        def audit(_: int, config: Configuration) -> None:
            assert well_formed_configuration(filereader, config) == []
            assert linearity_violations(config) == []

        run(filereader, 1_000, observer=audit)


class TestStuck:
    """Tests for configurations where no rule applies."""

    def test_null_field_call(self, corpus_program: Callable[[str], Program]) -> None:
        """Calling through a null field is stuck immediately."""
        outcome = run(corpus_program("null_call"), 100)

        assert outcome.kind == "Stuck:NullCall1"
        assert outcome.steps == 0
        assert outcome.stuck is not None
        assert outcome.stuck.reason.monitored

    def test_null_parameter_call(self, corpus_program: Callable[[str], Program]) -> None:
        """Calling through a null parameter is stuck inside the callee."""
        assert run(corpus_program("null_param"), 100).kind == "Stuck:NullCall2"

    def test_parameter_left_linear(self, corpus_program: Callable[[str], Program]) -> None:
        """Returning while the parameter still holds a live object is stuck."""
        outcome = run(corpus_program("param_misused"), 100)

        assert outcome.kind == "Stuck:ParameterMisused"
        assert outcome.stuck is not None
        assert not outcome.stuck.reason.monitored

    def test_method_not_available_on_field(
        self, make_program: Callable[..., Program], lamp_class: str
    ) -> None:
        """A second call outside the protocol is stuck."""
        program = make_program("lamp = new Lamp; lamp.on(); lamp.on()", "Lamp lamp", lamp_class)
        assert run(program, 100).kind == "Stuck:MthdNotAv1"

    def test_method_not_available_on_parameter(
        self, make_program: Callable[..., Program], lamp_class: str
    ) -> None:
        """The same through a parameter is reported separately."""
        program = make_program(
            "lamp = new Lamp; p = new Presser; p.press(lamp)",
            "Lamp lamp Presser p",
            lamp_class + PRESSER_CLASS,
        )
        assert run(program, 100).kind == "Stuck:MthdNotAv2"

    @pytest.mark.parametrize(
        ("body", "fields", "reason"),
        [
            ("lamp = new Lamp; lamp; unit", "Lamp lamp", StuckReason.LINEAR_VALUE_DROPPED),
            ("lamp = new Lamp; lamp = new Lamp", "Lamp lamp", StuckReason.FIELD_MISUSED),
            ("flag.go()", "bool flag", StuckReason.METHOD_NOT_UNDERSTOOD),
            ("lamp = new Lamp; lamp.off(); unit", "Lamp lamp", StuckReason.METHOD_NOT_AVAILABLE_FIELD),
            ("if (unit) { unit } else { unit }", "", StuckReason.BAD_VALUE),
        ],
    )
    def test_stuck_reasons(
        self,
        body: str,
        fields: str,
        reason: StuckReason,
        make_program: Callable[..., Program],
        lamp_class: str,
    ) -> None:
        """Each kind of bad configuration gets its own reason."""
        outcome = run(make_program(body, fields, lamp_class), 100)

        assert outcome.status is RunStatus.STUCK
        assert outcome.stuck is not None
        assert outcome.stuck.reason is reason

    def test_missing_field(self, corpus_program: Callable[[str], Program]) -> None:
        """Reading a field the object does not have is a field error."""
        program = corpus_program("main_only")
        config = replace(initial_configuration(program), expr=Ref("ghost", RefKind.FIELD))

        result = step(program, config)

        assert isinstance(result, Stuck)
        assert result.reason is StuckReason.FIELD_ERROR

    def test_continue_outside_loop(self, corpus_program: Callable[[str], Program]) -> None:
        """A bare continue has nothing to jump to."""
        program = corpus_program("main_only")
        config = replace(initial_configuration(program), expr=Continue("k"))

        result = step(program, config)

        assert isinstance(result, Stuck)
        assert result.reason is StuckReason.UNBOUND_CONTINUE


class TestWellFormedness:
    """Tests for configuration well-formedness and linearity."""

    def test_shared_linear_object(self, make_program: Callable[..., Program], lamp_class: str) -> None:
        """A live object held by a field and the expression is aliased."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = lamp_config(program)

        reasons = well_formed_configuration(program, config)

        assert "linear objects referenced more than once: o1" in reasons
        assert linearity_violations(config) == ["linear object 'o1' is referenced 2 times"]

    def test_shared_finished_object_allowed(
        self, make_program: Callable[..., Program], lamp_class: str
    ) -> None:
        """Objects at end may be referenced from several places."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = lamp_config(program)
        heap = {**config.heap, "o1": HeapEntry(replace(LAMP_AT_START, usage=END_USAGE), {})}
        config = replace(config, heap=heap)

        assert well_formed_configuration(program, config) == []
        assert linearity_violations(config) == []

    def test_dangling_reference(self, make_program: Callable[..., Program], lamp_class: str) -> None:
        """References must point into the heap."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = replace(lamp_config(program, expr_oid=False), expr=Lit(ObjectRef("o9")))

        reasons = well_formed_configuration(program, config)

        assert "references to objects not in heap: o9" in reasons

    def test_stack_must_match_returns(self, filereader: Program) -> None:
        """One frame per pending return, plus the main frame."""
        config = initial_configuration(filereader)
        config = replace(config, stack=(*config.stack, config.stack[0]))

        reasons = well_formed_configuration(filereader, config)

        assert any(r.startswith("stack has 2 frames") for r in reasons)

    def test_unreachable_usage(self, make_program: Callable[..., Program], lamp_class: str) -> None:
        """Objects must be at a usage their class can reach."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = lamp_config(program, expr_oid=False)
        wrong = replace(LAMP_AT_START, usage=parse_usage("{off; end}"))
        config = replace(config, heap={**config.heap, "o1": HeapEntry(wrong, {})})

        reasons = well_formed_configuration(program, config)

        assert any("unreachable usage" in r for r in reasons)

    def test_unreferenced_linear_object(
        self, make_program: Callable[..., Program], lamp_class: str
    ) -> None:
        """A live object nobody refers to has been lost."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = lamp_config(program, expr_oid=False)
        main = config.heap[MAIN_OBJECT]
        heap = {**config.heap, MAIN_OBJECT: replace(main, fields={"lamp": NULL})}

        assert linearity_violations(replace(config, heap=heap)) == [
            "linear object 'o1' is referenced 0 times"
        ]


class TestDescriptions:
    """Tests for configuration rendering and digests."""

    def test_describe(self, make_program: Callable[..., Program], lamp_class: str) -> None:
        """Objects are listed in allocation order, then the stack and expression."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        text = describe_configuration(lamp_config(program, expr_oid=False))

        assert text.splitlines() == [
            "o0: Main[end] {lamp=o1}",
            "o1: Lamp[{on; end}] {}",
            "stack: (o0, x=unit)",
            "expr: unit",
        ]

    def test_digest_is_stable(self, filereader: Program) -> None:
        """Equal configurations have equal digests."""
        a = initial_configuration(filereader)
        b = initial_configuration(filereader)
        c = replace(a, expr=Seq(Lit(UNIT), Lit(UNIT)))

        assert configuration_digest(a) == configuration_digest(b)
        assert configuration_digest(a) != configuration_digest(c)

    def test_protocols_completed(self, make_program: Callable[..., Program], lamp_class: str) -> None:
        """Completion requires every object to be at end."""
        program = make_program("unit", "Lamp lamp", lamp_class)
        config = lamp_config(program, expr_oid=False)

        assert not protocols_completed(config)
        assert protocols_completed(initial_configuration(program))
