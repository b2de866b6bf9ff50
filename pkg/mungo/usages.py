"""Labelled transition system over usages.

A usage moves on a method name (``Branch``), on an enum label (``Sel``), and
a recursion variable behaves as its defining equation (``Unfold``). The
reachable part of the system can be exported as a networkx graph and
rendered to DOT.
"""

import logging
from collections import deque

import networkx as nx

from mungo.errors import UnboundUsageVariableError, UnfoldCycleError
from mungo.printer import format_usage
from mungo.syntax import Branch, Choice, Usage, UsageVar

logger = logging.getLogger(__name__)

CALL_PREFIX = "call:"
LABEL_PREFIX = "label:"


def unfold(usage: Usage) -> Usage:
    """Replace a leading recursion variable by its equation until none is left.

    Raises:
        UnboundUsageVariableError: If a variable has no equation
        UnfoldCycleError: If the equations never reach a branch, choice or end
    """
    seen: list[str] = []
    body = usage.body
    while isinstance(body, UsageVar):
        if body.name in seen:
            raise UnfoldCycleError((*seen[seen.index(body.name) :], body.name))
        seen.append(body.name)
        try:
            body = usage.equation_map[body.name]
        except KeyError:
            raise UnboundUsageVariableError(body.name) from None
    if not seen:
        return usage
    return usage.with_body(body)


def step_method(usage: Usage, method: str) -> Usage | None:
    """Successor of ``usage`` after calling ``method``, if the call is allowed."""
    current = unfold(usage).body
    if isinstance(current, Branch):
        cont = current.continuation(method)
        if cont is not None:
            return usage.with_body(cont)
    return None


def step_label(usage: Usage, label: str) -> Usage | None:
    """Successor of ``usage`` after a method returned ``label``."""
    current = unfold(usage).body
    if isinstance(current, Choice):
        cont = current.continuation(label)
        if cont is not None:
            return usage.with_body(cont)
    return None


def offered_methods(usage: Usage) -> frozenset[str]:
    current = unfold(usage).body
    if isinstance(current, Branch):
        return frozenset(name for name, _ in current.methods)
    return frozenset()


def offered_labels(usage: Usage) -> frozenset[str]:
    current = unfold(usage).body
    if isinstance(current, Choice):
        return frozenset(name for name, _ in current.labels)
    return frozenset()


def _transitions(usage: Usage) -> list[tuple[str, Usage]]:
    current = unfold(usage).body
    if isinstance(current, Branch):
        return [
            (CALL_PREFIX + name, usage.with_body(cont)) for name, cont in current.methods
        ]
    if isinstance(current, Choice):
        return [
            (LABEL_PREFIX + name, usage.with_body(cont)) for name, cont in current.labels
        ]
    return []


def reachable_states(usage: Usage) -> frozenset[Usage]:
    """All usages reachable from ``usage`` in zero or more transitions."""
    return frozenset(data["usage"] for _, data in usage_graph(usage).nodes(data=True))


def is_reachable(source: Usage, target: Usage) -> bool:
    return target in reachable_states(source)


def is_productive(usage: Usage) -> bool:
    """Whether every equation of ``usage`` unfolds to a branch, choice or end."""
    try:
        for name, _ in usage.equations:
            unfold(usage.with_body(UsageVar(name)))
    except UnfoldCycleError:
        return False
    return True


def usage_graph(usage: Usage) -> "nx.MultiDiGraph[str]":
    """Reachable transition system of ``usage`` as a multigraph.

    Nodes are the printed canonical states in breadth-first discovery order;
    edges carry a ``label`` attribute of the form ``call:m`` or ``label:l``.
    """
    graph: nx.MultiDiGraph[str] = nx.MultiDiGraph()
    names: dict[Usage, str] = {}

    def node_for(state: Usage) -> str:
        if state not in names:
            names[state] = f"n{len(names)}"
            graph.add_node(names[state], label=format_usage(state), usage=state)
        return names[state]

    queue = deque([usage])
    node_for(usage)
    expanded: set[Usage] = set()
    while queue:
        state = queue.popleft()
        if state in expanded:
            continue
        expanded.add(state)
        for label, successor in _transitions(state):
            fresh = successor not in names
            graph.add_edge(node_for(state), node_for(successor), label=label)
            if fresh:
                queue.append(successor)
    logger.debug(
        "usage graph: %d states, %d transitions",
        graph.number_of_nodes(),
        graph.number_of_edges(),
    )
    return graph


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: "nx.MultiDiGraph[str]", name: str = "usage") -> str:
    """Render a graph built by :func:`usage_graph` as DOT text."""
    lines = [f"digraph {_dot_quote(name)} {{", "  rankdir=LR;"]
    for node, data in graph.nodes(data=True):
        lines.append(f"  {node} [label={_dot_quote(str(data['label']))}];")
    for src, dst, data in graph.edges(data=True):
        lines.append(f"  {src} -> {dst} [label={_dot_quote(str(data['label']))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
