"""Dialogue finite state machine: loading, validation, reply options, path enumeration.

States carry the agent's fixed query templates; transitions are keyed by
user-reply classes and carry the historical reply variants. The graph is
immutable after load and safe to share across concurrent sessions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

StateId = str


@dataclass(frozen=True)
class StateSpec:
    """One FSM state: an agent intent with its canonical query template."""

    id: StateId
    query: str
    attribute: str | None = None


@dataclass(frozen=True)
class Transition:
    source: StateId
    target: StateId
    reply_class: str
    reply_variants: tuple[str, ...]
    weights: tuple[float, ...] | None = None


@dataclass(frozen=True)
class Option:
    label: str
    agent_query: str
    target: StateId


@dataclass(frozen=True)
class OptionSet:
    """Lettered reply options for one state, in transition declaration order."""

    state: StateId
    options: tuple[Option, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(o.label for o in self.options)

    def by_label(self, label: str) -> Option:
        for o in self.options:
            if o.label == label:
                return o
        raise KeyError(label)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    location: str

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": self.message, "location": self.location}


class FsmValidationError(ValueError):
    """Raised when an FSM document violates a structural invariant."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        summary = "; ".join(f"{d.code} at {d.location}: {d.message}" for d in diagnostics)
        super().__init__(f"invalid FSM document: {summary}")


@dataclass(frozen=True)
class FsmGraph:
    """Validated dialogue state machine. Immutable; share freely."""

    states: tuple[StateSpec, ...]
    initial: StateId
    terminals: frozenset[StateId]
    transitions: tuple[Transition, ...]

    @cached_property
    def state_ids(self) -> frozenset[StateId]:
        return frozenset(s.id for s in self.states)

    @cached_property
    def states_by_id(self) -> dict[StateId, StateSpec]:
        return {s.id: s for s in self.states}

    @cached_property
    def outgoing(self) -> dict[StateId, tuple[Transition, ...]]:
        table: dict[StateId, list[Transition]] = {s.id: [] for s in self.states}
        for t in self.transitions:
            table[t.source].append(t)
        return {k: tuple(v) for k, v in table.items()}

    @property
    def attribute_goals(self) -> list[tuple[StateId, str]]:
        return [(s.id, s.attribute) for s in self.states if s.attribute]

    def query_of(self, state: StateId) -> str:
        return self.states_by_id[state].query

    def is_terminal(self, state: StateId) -> bool:
        return state in self.terminals


def validate_document(document: dict) -> list[Diagnostic]:
    """Check an FSM document against every graph invariant.

    Returns all violations found (not just the first), each with a location.
    """
    diags: list[Diagnostic] = []
    states = document.get("states") or []
    if not states:
        diags.append(Diagnostic("no-states", "document declares no states", "states"))
        return diags

    seen: set[str] = set()
    for i, s in enumerate(states):
        sid = s.get("id")
        if not sid:
            diags.append(Diagnostic("missing-id", "state without id", f"states[{i}]"))
            continue
        if sid in seen:
            diags.append(Diagnostic("duplicate-state", f"state {sid} declared twice", f"states[{i}]"))
        seen.add(sid)
        if "query" not in s:
            diags.append(Diagnostic("missing-query", f"state {sid} has no query text", f"states[{i}]"))

    initial = document.get("initial")
    if initial not in seen:
        diags.append(Diagnostic("unknown-initial", f"initial state {initial!r} not declared", "initial"))
    terminals = set(document.get("terminals") or [])
    for t in sorted(terminals):
        if t not in seen:
            diags.append(Diagnostic("unknown-terminal", f"terminal state {t!r} not declared", "terminals"))

    outgoing: dict[str, list[str]] = {sid: [] for sid in seen}
    adjacency: dict[str, set[str]] = {sid: set() for sid in seen}
    for i, t in enumerate(document.get("transitions") or []):
        loc = f"transitions[{i}]"
        src, tgt = t.get("source"), t.get("target")
        for end, name in ((src, "source"), (tgt, "target")):
            if end not in seen:
                diags.append(Diagnostic("unknown-state", f"{name} state {end!r} not declared", loc))
        variants = t.get("reply_variants") or []
        if not variants:
            diags.append(Diagnostic("empty-variants", "transition has no reply variants", loc))
        weights = t.get("weights")
        if weights is not None:
            if len(weights) != len(variants):
                diags.append(Diagnostic("weight-mismatch", "weights do not align with reply_variants", loc))
            if any(w <= 0 for w in weights):
                diags.append(Diagnostic("bad-weight", "weights must be strictly positive", loc))
        if src in seen:
            rc = t.get("reply_class", "")
            if rc in outgoing[src]:
                diags.append(Diagnostic("duplicate-reply-class", f"state {src} has two transitions for reply class {rc!r}", loc))
            outgoing[src].append(rc)
            if src in terminals:
                diags.append(Diagnostic("terminal-outgoing", f"terminal state {src} has an outgoing transition", loc))
            if tgt in seen:
                adjacency[src].add(tgt)

    for sid in sorted(seen):
        if sid not in terminals and not outgoing.get(sid):
            diags.append(Diagnostic("dead-end", f"non-terminal state {sid} has no outgoing transition", f"state {sid}"))

    if initial in seen:
        reachable = {initial}
        frontier = [initial]
        while frontier:
            cur = frontier.pop()
            for nxt in adjacency.get(cur, ()):
                if nxt not in reachable:
                    reachable.add(nxt)
                    frontier.append(nxt)
        for sid in sorted(seen - reachable):
            diags.append(Diagnostic("unreachable", f"state {sid} is unreachable from {initial}", f"state {sid}"))

    return diags


def load_fsm(document: dict) -> FsmGraph:
    """Build a validated FsmGraph from a parsed FSM document.

    Raises FsmValidationError carrying every diagnostic on any invariant breach.
    """
    diags = validate_document(document)
    if diags:
        raise FsmValidationError(diags)
    states = tuple(
        StateSpec(id=s["id"], query=s["query"], attribute=s.get("attribute"))
        for s in document["states"]
    )
    transitions = tuple(
        Transition(
            source=t["source"],
            target=t["target"],
            reply_class=t["reply_class"],
            reply_variants=tuple(t["reply_variants"]),
            weights=tuple(t["weights"]) if t.get("weights") is not None else None,
        )
        for t in document.get("transitions") or []
    )
    return FsmGraph(
        states=states,
        initial=document["initial"],
        terminals=frozenset(document.get("terminals") or []),
        transitions=transitions,
    )


def load_fsm_path(path: str | Path) -> FsmGraph:
    with open(path, encoding="utf-8") as fh:
        return load_fsm(json.load(fh))


def to_document(graph: FsmGraph) -> dict:
    """Serialize a graph back to its document form; load_fsm(to_document(g)) == g."""
    doc: dict = {
        "states": [
            {"id": s.id, "query": s.query, **({"attribute": s.attribute} if s.attribute else {})}
            for s in graph.states
        ],
        "initial": graph.initial,
        "terminals": sorted(graph.terminals),
        "transitions": [],
    }
    for t in graph.transitions:
        entry: dict = {
            "source": t.source,
            "target": t.target,
            "reply_class": t.reply_class,
            "reply_variants": list(t.reply_variants),
        }
        if t.weights is not None:
            entry["weights"] = list(t.weights)
        doc["transitions"].append(entry)
    return doc


def candidate_options(graph: FsmGraph, state: StateId) -> OptionSet:
    """Derive the lettered reply options for a state.

    Labels run A, B, C, ... in transition declaration order; the option text is
    the target state's query template. Terminal states yield an empty set.
    """
    if state not in graph.state_ids:
        raise KeyError(f"unknown state {state!r}")
    options = tuple(
        Option(label=chr(ord("A") + i), agent_query=graph.query_of(t.target), target=t.target)
        for i, t in enumerate(graph.outgoing[state])
    )
    return OptionSet(state=state, options=options)


def transition_for_option(graph: FsmGraph, state: StateId, label: str) -> Transition:
    """Map an option label back to the transition it was derived from."""
    index = ord(label) - ord("A")
    outgoing = graph.outgoing[state]
    if not 0 <= index < len(outgoing):
        raise KeyError(f"state {state} has no option {label}")
    return outgoing[index]


def enumerate_paths(graph: FsmGraph, max_length: int) -> dict[int, list[tuple[StateId, ...]]]:
    """Enumerate all initial-to-terminal state sequences, grouped by state count.

    Cycles are permitted in the graph and bounded here: no path exceeds
    max_length states. Paths within a group are deduplicated.
    """
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    groups: dict[int, dict[tuple[StateId, ...], None]] = {}
    stack: list[tuple[StateId, ...]] = [(graph.initial,)]
    while stack:
        path = stack.pop()
        cur = path[-1]
        if graph.is_terminal(cur):
            groups.setdefault(len(path), {})[path] = None
            continue
        if len(path) >= max_length:
            continue
        # reversed keeps declaration order in the output lists
        for t in reversed(graph.outgoing[cur]):
            stack.append(path + (t.target,))
    return {length: list(paths) for length, paths in sorted(groups.items())}


def transitions_between(graph: FsmGraph, source: StateId, target: StateId) -> tuple[Transition, ...]:
    """All parallel transitions connecting two states, in declaration order."""
    return tuple(t for t in graph.outgoing.get(source, ()) if t.target == target)


def replay_is_valid(graph: FsmGraph, path: tuple[StateId, ...] | list[StateId]) -> bool:
    """True when every consecutive pair in the path is connected by a transition."""
    if not path or path[0] != graph.initial:
        return False
    return all(transitions_between(graph, a, b) for a, b in zip(path, path[1:]))
