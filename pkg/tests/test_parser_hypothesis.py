"""Property-based tests for the parser and printer using Hypothesis.

Method bodies are generated from the source grammar and planted into a
fixed class skeleton; printing the program and parsing it back must give
an equal program.
"""

from dataclasses import replace

from hypothesis import given, settings
from hypothesis import strategies as st

from mungo.parser import parse_program
from mungo.printer import format_expr, print_program
from mungo.syntax import (
    FALSE,
    NULL,
    TRUE,
    UNIT,
    Assign,
    Call,
    Continue,
    Expr,
    If,
    Labelled,
    LabelValue,
    Lit,
    New,
    Program,
    Ref,
    RefKind,
    Seq,
    Switch,
)

SKELETON = """
enum Dir { UP DOWN }

class Cell {
  {go; end}
  void go() { unit }
}

class Box {
  {run; end}
  Cell a
  Cell b
  bool flag
  bool run(bool x) { unit }
}

class Main {
  {main; end}
  void main() { unit }
}
"""

SKELETON_PROGRAM = parse_program(SKELETON)

FIELDS = ("a", "b", "flag")
TARGETS = (
    Ref("a", RefKind.FIELD),
    Ref("b", RefKind.FIELD),
    Ref("x", RefKind.PARAM),
)
LABELS = ("UP", "DOWN")

leaf_strategy = st.sampled_from(
    [
        Lit(UNIT),
        Lit(TRUE),
        Lit(FALSE),
        Lit(NULL),
        Lit(LabelValue("UP")),
        Lit(LabelValue("DOWN")),
        Ref("a", RefKind.FIELD),
        Ref("flag", RefKind.FIELD),
        Ref("x", RefKind.PARAM),
        New("Cell"),
    ]
)


def make_switch(target: Ref, arg: Expr, branches: list[tuple[str, Expr]]) -> Switch:
    return Switch(target, "go", Call(target, "go", arg), tuple(branches))


def extend(children: st.SearchStrategy[Expr]) -> st.SearchStrategy[Expr]:
    arms = st.lists(
        st.tuples(st.sampled_from(LABELS), children),
        min_size=1,
        max_size=2,
        unique_by=lambda arm: arm[0],
    )
    return st.one_of(
        st.builds(Assign, st.sampled_from(FIELDS), children),
        st.builds(Call, st.sampled_from(TARGETS), st.sampled_from(["go", "run"]), children),
        st.builds(Seq, children, children),
        st.builds(If, children, children, children),
        st.builds(make_switch, st.sampled_from(TARGETS), children, arms),
    )


expr_strategy = st.recursive(leaf_strategy, extend, max_leaves=12)

body_strategy = st.one_of(
    expr_strategy,
    expr_strategy.map(lambda e: Labelled("k", Seq(e, Continue("k")))),
)


def with_body(body: Expr) -> Program:
    """The skeleton with ``Box.run`` replaced by ``body``."""
    box = SKELETON_PROGRAM.class_map["Box"]
    run = replace(box.method_map["run"], body=body)
    new_box = replace(box, methods=(run,))
    classes = tuple(new_box if c.name == "Box" else c for c in SKELETON_PROGRAM.classes)
    return replace(SKELETON_PROGRAM, classes=classes)


class TestProgramRoundTripProperties:
    """Property-based tests for print_program and parse_program."""

    @given(body_strategy)
    @settings(max_examples=500, deadline=None)
    def test_print_then_parse_is_identity(self, body: Expr) -> None:
        """Any generated body survives printing and parsing."""
        program = with_body(body)
        assert parse_program(print_program(program)) == program

    @given(body_strategy)
    @settings(max_examples=200, deadline=None)
    def test_printing_is_stable(self, body: Expr) -> None:
        """A reparsed program prints exactly as before."""
        text = print_program(with_body(body))
        assert print_program(parse_program(text)) == text

    @given(expr_strategy)
    @settings(max_examples=200, deadline=None)
    def test_expression_text_has_no_newlines(self, body: Expr) -> None:
        """Expressions print on one line."""
        assert "\n" not in format_expr(body)
