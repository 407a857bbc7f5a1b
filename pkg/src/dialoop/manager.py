"""Session runner: prompt rendering, output parsing, validation, fallback.

Safety contract: every agent query emitted at state s is either one of the
FSM-derived candidate queries of s or s's reissued original question. Invalid
model output (including a backend timeout) never surfaces to the caller; it
degrades to repeating the last valid response up to three times, then
reissuing the state's original question with the counter reset.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .fsm import FsmGraph, Option, OptionSet, StateId, Transition, candidate_options
from .gateway import GatewayTimeout, LlmGateway
from .templates import render_prompt, split_cot_and_label

MAX_REPEATS = 3
DEFAULT_TURN_BUDGET = 12

EMIT = "emit"
REPEAT_LAST_VALID = "repeat_last_valid"
REISSUE_ORIGINAL = "reissue_original"
OPEN = "open"  # the session-opening query, before any model output exists

COMPLETED = "completed"
ABANDONED = "abandoned"


class TurnBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentAction:
    kind: str
    query: str
    option: Option | None = None


@dataclass
class Turn:
    """One transcript line: the agent query issued at a state plus its reply."""

    state: StateId
    agent_query: str
    user_reply: str | None = None
    action_kind: str = EMIT
    retry_count: int = 0
    latency_ms: float = 0.0
    overhead_ms: float = 0.0
    gold_label: str | None = None
    chosen_label: str | None = None
    success: bool | None = None

    def to_dict(self) -> dict:
        return {
            "state": self.state,
            "agent_query": self.agent_query,
            "user_reply": self.user_reply,
            "action_kind": self.action_kind,
            "retry_count": self.retry_count,
            "latency_ms": round(self.latency_ms, 3),
            "overhead_ms": round(self.overhead_ms, 3),
            "gold_label": self.gold_label,
            "chosen_label": self.chosen_label,
            "success": self.success,
        }


@dataclass
class GenerationRecord:
    """One policy call: prompt, raw output, parse result, validity."""

    prompt_text: str
    raw_output: str
    parsed_cot: str
    parsed_label: str | None
    valid: bool
    state: StateId
    options: OptionSet
    timed_out: bool = False

    def to_dict(self) -> dict:
        return {
            "prompt_text": self.prompt_text,
            "raw_output": self.raw_output,
            "parsed_cot": self.parsed_cot,
            "parsed_label": self.parsed_label,
            "valid": self.valid,
            "state": self.state,
            "options": [(o.label, o.agent_query, o.target) for o in self.options.options],
            "timed_out": self.timed_out,
        }


@dataclass
class SessionState:
    graph: FsmGraph
    current_state: StateId
    history: list[Turn] = field(default_factory=list)
    retry_count: int = 0
    last_valid_query: str | None = None
    turn_budget: int = DEFAULT_TURN_BUDGET
    acquired: dict[str, str] = field(default_factory=dict)
    outcome: str | None = None
    template_version: str = "v1"

    @property
    def original_question(self) -> str:
        return self.graph.query_of(self.current_state)


def start_session(graph: FsmGraph, budget: int = DEFAULT_TURN_BUDGET,
                  template_version: str = "v1") -> SessionState:
    """Open a session at the initial state; the opener consumes one budget slot."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    session = SessionState(graph=graph, current_state=graph.initial, turn_budget=budget,
                           template_version=template_version)
    session.history.append(
        Turn(state=graph.initial, agent_query=graph.query_of(graph.initial), action_kind=OPEN)
    )
    if graph.is_terminal(graph.initial):
        session.outcome = COMPLETED
    return session


def build_prompt(session: SessionState, options: OptionSet, template_version: str = "v1") -> str:
    """Render the selective-generation prompt for the session's pending turn."""
    if options.state != session.current_state:
        raise ValueError("options do not belong to the session's current state")
    if not options.options and not session.graph.is_terminal(session.current_state):
        raise ValueError(f"non-terminal state {session.current_state} has no options")
    turns = [(t.agent_query, t.user_reply) for t in session.history]
    return render_prompt(turns, options, template_version)


def parse_output(raw: str, options: OptionSet) -> tuple[str, str | None]:
    """Total, deterministic parse of model output into (cot, label or None)."""
    del options  # membership is validation's concern, not the grammar's
    return split_cot_and_label(raw)


def validate_and_fallback(record: GenerationRecord, session: SessionState) -> AgentAction:
    """Map a generation record to a safe agent action; total function.

    Valid output emits the chosen option and resets the repeat counter. Invalid
    output repeats the last valid response while the counter allows, then
    reissues the state's original question and resets the counter. A reissued
    question becomes the new "last valid" text, so later repeats repeat it.
    """
    if record.valid and record.parsed_label is not None:
        option = record.options.by_label(record.parsed_label)
        session.retry_count = 0
        session.last_valid_query = option.agent_query
        return AgentAction(kind=EMIT, query=option.agent_query, option=option)
    if session.last_valid_query is not None and session.retry_count < MAX_REPEATS:
        session.retry_count += 1
        return AgentAction(kind=REPEAT_LAST_VALID, query=session.last_valid_query)
    session.retry_count = 0
    session.last_valid_query = session.original_question
    return AgentAction(kind=REISSUE_ORIGINAL, query=session.original_question)


def step(
    session: SessionState,
    policy: LlmGateway,
    user_reply: str,
) -> tuple[AgentAction, SessionState, GenerationRecord]:
    """Consume one user reply and issue the next agent query.

    The state advances only on a valid emit; a gateway timeout is treated as
    invalid output and takes the fallback path. Raises TurnBudgetExhausted
    (marking the session abandoned) when no budget remains for a new query.
    """
    if session.outcome is not None:
        raise RuntimeError(f"session already {session.outcome}")
    if len(session.history) >= session.turn_budget:
        session.outcome = ABANDONED
        raise TurnBudgetExhausted(f"turn budget {session.turn_budget} exhausted")

    started = time.perf_counter()
    session.history[-1].user_reply = user_reply
    options = candidate_options(session.graph, session.current_state)
    prompt = build_prompt(session, options, session.template_version)

    backend_started = time.perf_counter()
    timed_out = False
    try:
        raw = policy.complete(prompt)
    except GatewayTimeout:
        raw = ""
        timed_out = True
    backend_ms = (time.perf_counter() - backend_started) * 1000.0

    cot, label = parse_output(raw, options)
    record = GenerationRecord(
        prompt_text=prompt,
        raw_output=raw,
        parsed_cot=cot,
        parsed_label=label,
        valid=label is not None and label in options.labels,
        state=session.current_state,
        options=options,
        timed_out=timed_out,
    )
    action = validate_and_fallback(record, session)

    if action.kind == EMIT and action.option is not None:
        asked = session.graph.states_by_id[session.current_state]
        if asked.attribute:
            transition = session.graph.outgoing[session.current_state][
                ord(record.parsed_label) - ord("A")  # type: ignore[arg-type]
            ]
            session.acquired[asked.attribute] = transition.reply_class
        session.current_state = action.option.target

    total_ms = (time.perf_counter() - started) * 1000.0
    session.history.append(
        Turn(
            state=session.current_state,
            agent_query=action.query,
            action_kind=action.kind,
            retry_count=session.retry_count,
            latency_ms=total_ms,
            overhead_ms=total_ms - backend_ms,
            chosen_label=record.parsed_label if record.valid else None,
        )
    )
    if session.graph.is_terminal(session.current_state):
        session.outcome = COMPLETED
    return action, session, record


UserAgent = Callable[[StateId], tuple[str, Transition]]


def run_session(
    graph: FsmGraph,
    policy: LlmGateway,
    user_agent: UserAgent,
    budget: int = DEFAULT_TURN_BUDGET,
) -> tuple[list[Turn], list[GenerationRecord], str]:
    """Loop step() against a user agent until terminal or budget exhaustion.

    The user agent returns (utterance, ground-truth transition); the turn that
    asked gets gold/chosen labels and a per-prompt success flag for TSR.
    """
    session = start_session(graph, budget)
    records: list[GenerationRecord] = []
    while session.outcome is None:
        if len(session.history) >= session.turn_budget:
            session.outcome = ABANDONED
            break
        reply, gold_transition = user_agent(session.current_state)
        options = candidate_options(session.graph, session.current_state)
        gold_label = options.options[
            session.graph.outgoing[session.current_state].index(gold_transition)
        ].label
        asked_turn = session.history[-1]
        action, _, record = step(session, policy, reply)
        records.append(record)
        asked_turn.gold_label = gold_label
        asked_turn.chosen_label = record.parsed_label if record.valid else None
        asked_turn.success = action.kind == EMIT and record.parsed_label == gold_label
    return session.history, records, session.outcome or ABANDONED
