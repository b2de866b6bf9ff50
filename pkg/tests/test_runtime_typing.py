"""Tests for typing of run-time configurations."""

from collections.abc import Callable
from dataclasses import replace

import pytest

from mungo.config import MAIN_OBJECT
from mungo.errors import Diagnostic, DiagnosticCode
from mungo.interpreter import (
    Configuration,
    HeapEntry,
    initial_configuration,
    run,
)
from mungo.runtime_typing import WellTypedChecker, well_typed_configuration
from mungo.typechecker import Frame
from mungo.syntax import (
    BOOL,
    BOTTOM,
    END_USAGE,
    FALSE,
    NULL,
    UNIT,
    Lit,
    ObjectRef,
    Program,
    Typestate,
)

ACCEPTED = [
    "filereader",
    "id_generic",
    "param_protocol",
    "conditional",
    "switch_on_param",
    "relay",
    "loop_flag",
]


def codes(diagnostics: list[Diagnostic]) -> list[DiagnosticCode]:
    return [d.code for d in diagnostics]


def reader_config(program: Program, reader: str = "o1") -> Configuration:
    """Main holding a finished FileReader that still owns an unopened File."""
    main = initial_configuration(program)
    file_usage = program.class_map["File"].usage
    heap = {
        MAIN_OBJECT: HeapEntry(main.heap[MAIN_OBJECT].typestate, {"reader": ObjectRef(reader)}),
        "o1": HeapEntry(
            Typestate("FileReader", BOTTOM, END_USAGE), {"file": ObjectRef("o2")}
        ),
        "o2": HeapEntry(
            Typestate("File", BOTTOM, file_usage),
            {"b1": FALSE, "b2": FALSE, "b3": FALSE},
        ),
    }
    return Configuration(heap, main.stack, Lit(UNIT), next_id=3)


class TestInitialConfigurations:
    """The starting configuration of a typed program is well typed."""

    @pytest.mark.parametrize("name", ACCEPTED)
    def test_initial_well_typed(
        self, name: str, corpus_program: Callable[[str], Program]
    ) -> None:
        """Accepted programs start in a well-typed configuration."""
        program = corpus_program(name)
        assert well_typed_configuration(program, initial_configuration(program)) == []

    def test_divergent_expression_accepted(
        self, corpus_program: Callable[[str], Program]
    ) -> None:
        """A body that never completes has nothing left to complete."""
        program = corpus_program("infinite_loop")
        assert well_typed_configuration(program, initial_configuration(program)) == []


class TestPreservation:
    """Typing is preserved by every step of a run."""

    def test_every_step_well_typed(self, filereader: Program) -> None:
        """Each configuration the file reader passes through is well typed."""
        checker = WellTypedChecker(filereader)

        def audit(_: int, config: Configuration) -> None:
            assert checker.check(config) == []

        outcome = run(filereader, 1_000, observer=audit)

        assert outcome.kind == "Terminal"
        assert checker.cache

    def test_cache_reused(self, filereader: Program) -> None:
        """Repeated checks of the same objects hit the cache."""
        checker = WellTypedChecker(filereader)
        config = initial_configuration(filereader)

        checker.check(config)
        size = len(checker.cache)
        checker.check(config)

        assert len(checker.cache) == size


class TestIllTyped:
    """Each part of the judgement rejects its own kind of breakage."""

    def test_dangling_heap_field(self, filereader: Program) -> None:
        """Fields must point at objects in the heap."""
        config = reader_config(filereader, reader="o9")
        assert codes(well_typed_configuration(filereader, config)) == [
            DiagnosticCode.WELL_TYPED_HEAP
        ]

    def test_extra_frame(self, filereader: Program) -> None:
        """The stack has one frame per pending return."""
        config = initial_configuration(filereader)
        config = replace(config, expr=Lit(UNIT), stack=(*config.stack, config.stack[0]))

        diagnostics = well_typed_configuration(filereader, config)

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_STACK]
        assert "2 frames for 0 pending returns" in diagnostics[0].message

    def test_missing_object_in_expression(self, filereader: Program) -> None:
        """Objects in the expression must exist."""
        config = replace(initial_configuration(filereader), expr=Lit(ObjectRef("o9")))
        assert codes(well_typed_configuration(filereader, config)) == [
            DiagnosticCode.WELL_TYPED_OBJECTS
        ]

    def test_expression_error(self, corpus_program: Callable[[str], Program]) -> None:
        """Typing errors in the expression are wrapped with their code."""
        program = corpus_program("null_call")
        (diagnostic,) = well_typed_configuration(program, initial_configuration(program))

        assert diagnostic.code is DiagnosticCode.WELL_TYPED_EXPRESSION
        assert diagnostic.message.startswith("FieldNotAvailable:")

    def test_unfinished_protocol_of_field(self, filereader: Program) -> None:
        """A finished object may not still own a live one."""
        (diagnostic,) = well_typed_configuration(filereader, reader_config(filereader))

        assert diagnostic.code is DiagnosticCode.WELL_TYPED_DECLARATIONS
        assert diagnostic.message.startswith("object 'o1' at usage end:")
        assert "fields not terminated" in diagnostic.message

    def test_null_field_of_finished_object(self, filereader: Program) -> None:
        """Once the owned object is released the configuration is fine."""
        config = reader_config(filereader)
        heap = dict(config.heap)
        heap["o1"] = replace(heap["o1"], fields={"file": NULL})
        del heap["o2"]

        assert well_typed_configuration(filereader, replace(config, heap=heap)) == []

    def test_undeclared_field(self, filereader: Program) -> None:
        """Objects hold no fields beyond those their class declares."""
        config = initial_configuration(filereader)
        main = config.heap[MAIN_OBJECT]
        heap = {MAIN_OBJECT: replace(main, fields={**main.fields, "ghost": FALSE})}

        diagnostics = well_typed_configuration(filereader, replace(config, heap=heap))

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_HEAP]
        assert "{ghost, reader}" in diagnostics[0].message
        assert "declares {reader}" in diagnostics[0].message

    def test_missing_declared_field(self, filereader: Program) -> None:
        """Objects hold every field their class declares."""
        config = initial_configuration(filereader)
        heap = {MAIN_OBJECT: replace(config.heap[MAIN_OBJECT], fields={})}

        diagnostics = well_typed_configuration(filereader, replace(config, heap=heap))

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_HEAP]
        assert "has fields {}" in diagnostics[0].message


class TestSuppliedEnvironments:
    """Environments passed in must agree with the configuration."""

    @staticmethod
    def released_config(program: Program) -> Configuration:
        """A finished FileReader whose file field is back to null."""
        config = reader_config(program)
        heap = dict(config.heap)
        heap["o1"] = replace(heap["o1"], fields={"file": NULL})
        del heap["o2"]
        return replace(config, heap=heap)

    def test_derived_environments_accepted(self, filereader: Program) -> None:
        """Passing the environments rebuilt from the heap changes nothing."""
        config = self.released_config(filereader)
        state, problems = WellTypedChecker(filereader).initial_state(config)

        assert problems == []
        assert (
            well_typed_configuration(
                filereader,
                config,
                lam=state.lam,
                objects=state.objects,
                frames=state.stack,
            )
            == []
        )

    def test_null_field_typed_as_object(self, filereader: Program) -> None:
        """A null field typed as a File is a heap violation."""
        config = self.released_config(filereader)
        state, _ = WellTypedChecker(filereader).initial_state(config)
        file_type = Typestate("File", BOTTOM, filereader.class_map["File"].usage)
        lam = dict(state.lam)
        lam["o1"] = replace(lam["o1"], fields={"file": file_type})

        diagnostics = well_typed_configuration(filereader, config, lam=lam)

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_HEAP]
        assert diagnostics[0].message.startswith("field 'file' of 'o1' is typed File")

    def test_field_typing_for_absent_object(self, filereader: Program) -> None:
        """The field typing covers exactly the objects in the heap."""
        config = initial_configuration(filereader)
        state, _ = WellTypedChecker(filereader).initial_state(config)
        lam = {**state.lam, "o7": state.lam[MAIN_OBJECT]}

        diagnostics = well_typed_configuration(filereader, config, lam=lam)

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_HEAP]
        assert "covers {o0, o7}" in diagnostics[0].message

    def test_frame_type_disagrees(self, filereader: Program) -> None:
        """Parameter types must match the values on the stack."""
        config = initial_configuration(filereader)
        frame = config.stack[0]

        diagnostics = well_typed_configuration(
            filereader, config, frames=(Frame(frame.obj, frame.param, BOOL),)
        )

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_STACK]

    def test_frame_count_disagrees(self, filereader: Program) -> None:
        """There is one typed frame per run-time frame."""
        config = initial_configuration(filereader)

        diagnostics = well_typed_configuration(filereader, config, frames=())

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_STACK]
        assert "0 typed frames for 1 run-time frames" in diagnostics[0].message

    def test_object_typing_beyond_expression(self, filereader: Program) -> None:
        """Only objects free in the expression are typed."""
        config = initial_configuration(filereader)
        main_type = config.heap[MAIN_OBJECT].typestate

        diagnostics = well_typed_configuration(
            filereader, config, objects={MAIN_OBJECT: main_type}
        )

        assert codes(diagnostics) == [DiagnosticCode.WELL_TYPED_OBJECTS]
