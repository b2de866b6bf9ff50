"""Property-based tests for usages using Hypothesis."""

from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mungo.parser import parse_usage
from mungo.printer import format_usage
from mungo.syntax import END, Branch, Choice, Usage, UsageBody, UsageVar
from mungo.usages import (
    is_productive,
    offered_labels,
    offered_methods,
    reachable_states,
    step_label,
    step_method,
    unfold,
    usage_graph,
)

VARIABLES = ("X", "Y", "Z")
ALL_METHODS = frozenset("mnpq")
ALL_LABELS = frozenset("LMN")

body_strategy: st.SearchStrategy[UsageBody] = st.deferred(
    lambda: st.one_of(
        st.just(END),
        st.sampled_from([UsageVar(v) for v in VARIABLES]),
        st.lists(
            st.tuples(st.sampled_from("mnp"), cont_strategy),
            max_size=3,
            unique_by=lambda pair: pair[0],
        ).map(lambda methods: Branch(tuple(methods))),
    )
)

cont_strategy: st.SearchStrategy[UsageBody] = st.deferred(
    lambda: st.one_of(
        body_strategy,
        st.lists(
            st.tuples(st.sampled_from("LM"), body_strategy),
            min_size=1,
            max_size=2,
            unique_by=lambda pair: pair[0],
        ).map(lambda labels: Choice(tuple(labels))),
    )
)

usage_strategy = st.builds(
    lambda body, eqs: Usage(body, tuple(eqs.items())),
    cont_strategy,
    st.dictionaries(st.sampled_from(VARIABLES), cont_strategy, max_size=3),
)

closed_usage_strategy = st.builds(
    lambda body, eqs: Usage(body, tuple(eqs.items())),
    cont_strategy,
    st.fixed_dictionaries({v: cont_strategy for v in VARIABLES}),
)


class TestUsageSyntaxProperties:
    """Property-based tests for the usage concrete syntax."""

    @given(usage_strategy)
    @settings(max_examples=300, deadline=None)
    def test_format_then_parse_is_identity(self, usage: Usage) -> None:
        """Printed usages parse back to themselves."""
        assert parse_usage(format_usage(usage)) == usage

    @given(usage_strategy)
    @settings(max_examples=100, deadline=None)
    def test_equations_are_canonical(self, usage: Usage) -> None:
        """Equations stay sorted and rebuilding a usage changes nothing."""
        names = [name for name, _ in usage.equations]
        assert names == sorted(names)
        assert Usage(usage.body, usage.equations) == usage


class TestUnfoldProperties:
    """Property-based tests for unfolding and transitions."""

    @given(closed_usage_strategy)
    @settings(max_examples=200, deadline=None)
    def test_unfold_is_idempotent(self, usage: Usage) -> None:
        """Unfolding an unfolded usage changes nothing."""
        assume(is_productive(usage))
        once = unfold(usage)
        assert unfold(once) == once
        assert not isinstance(once.body, UsageVar)

    @given(closed_usage_strategy)
    @settings(max_examples=200, deadline=None)
    def test_transitions_invariant_under_unfold(self, usage: Usage) -> None:
        """A usage and its unfolding offer the same moves to the same states."""
        assume(is_productive(usage))
        unfolded = unfold(usage)

        assert offered_methods(usage) == offered_methods(unfolded)
        assert offered_labels(usage) == offered_labels(unfolded)
        for method in ALL_METHODS:
            assert step_method(usage, method) == step_method(unfolded, method)
        for label in ALL_LABELS:
            assert step_label(usage, label) == step_label(unfolded, label)

    @given(closed_usage_strategy)
    @settings(max_examples=200, deadline=None)
    def test_unoffered_moves_are_refused(self, usage: Usage) -> None:
        """Only offered methods and labels have successors."""
        assume(is_productive(usage))

        for method in ALL_METHODS - offered_methods(usage):
            assert step_method(usage, method) is None
        for label in ALL_LABELS - offered_labels(usage):
            assert step_label(usage, label) is None

    @given(closed_usage_strategy)
    @settings(max_examples=100, deadline=None)
    def test_reachable_states_closed_under_steps(self, usage: Usage) -> None:
        """Every successor of a reachable state is reachable, and so is the start."""
        assume(is_productive(usage))
        states = reachable_states(usage)

        assert usage in states
        for state in states:
            for method in offered_methods(state):
                assert step_method(state, method) in states
            for label in offered_labels(state):
                assert step_label(state, label) in states

    @given(closed_usage_strategy)
    @settings(max_examples=100, deadline=None)
    def test_graph_edges_are_transitions(self, usage: Usage) -> None:
        """Each edge of the exported graph is one allowed move."""
        assume(is_productive(usage))
        graph = usage_graph(usage)
        states = graph.nodes(data="usage")

        for src, dst, label in graph.edges(data="label"):
            kind, _, name = label.partition(":")
            step = step_method if kind == "call" else step_label
            assert step(states[src], name) == states[dst]
