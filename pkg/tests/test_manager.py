from __future__ import annotations

import random

import pytest

from dialoop.fsm import candidate_options, load_fsm
from dialoop.gateway import BackendProfile, LlmGateway
from dialoop.manager import (
    ABANDONED,
    COMPLETED,
    EMIT,
    REISSUE_ORIGINAL,
    REPEAT_LAST_VALID,
    GenerationRecord,
    TurnBudgetExhausted,
    build_prompt,
    parse_output,
    run_session,
    start_session,
    step,
    validate_and_fallback,
)
from dialoop.simulator import OwnerProfile, make_user_agent

FIVE_OPTION_DOC = {
    "states": [{"id": "hub", "query": "Which detail shall we confirm?"}]
    + [{"id": f"leaf{i}", "query": f"Leaf question {i}?"} for i in range(5)],
    "initial": "hub",
    "terminals": [f"leaf{i}" for i in range(5)],
    "transitions": [
        {"source": "hub", "target": f"leaf{i}", "reply_class": f"pick{i}",
         "reply_variants": [f"choice {i}"]}
        for i in range(5)
    ],
}


def _oracle_policy(graph, seed=0):
    profile = BackendProfile(role="policy", kind="mock", identifier="oracle", seed=seed,
                             options={"behavior": "oracle"})
    return LlmGateway(profile, graph=graph)


def _record_for(session, options, label, raw=None):
    return GenerationRecord(
        prompt_text="p",
        raw_output=raw if raw is not None else (label or ""),
        parsed_cot="",
        parsed_label=label,
        valid=label is not None and label in options.labels,
        state=session.current_state,
        options=options,
    )


def test_prompt_contains_all_five_labels_and_instruction():
    graph = load_fsm(FIVE_OPTION_DOC)
    session = start_session(graph)
    session.history[-1].user_reply = "choice 3"
    prompt = build_prompt(session, candidate_options(graph, "hub"))
    for letter, i in zip("ABCDE", range(5)):
        assert f"{letter}. Leaf question {i}?" in prompt
    assert "then the single letter" in prompt


def test_prompt_opener_context_only(cake_shop_graph):
    session = start_session(cake_shop_graph)
    prompt = build_prompt(session, candidate_options(cake_shop_graph, "s0"))
    assert "Agent: Hello, this is the map service. Is this ABC Cake Shop?" in prompt
    assert "User:" not in prompt


def test_prompt_rendering_deterministic(cake_shop_graph):
    session = start_session(cake_shop_graph)
    session.history[-1].user_reply = "Yes"
    options = candidate_options(cake_shop_graph, "s0")
    assert build_prompt(session, options) == build_prompt(session, options)


def test_parse_output_cot_then_letter(cake_shop_graph):
    options = candidate_options(cake_shop_graph, "s0")
    cot, label = parse_output("User's reply confirmed as ABC cake shop. E", options)
    assert cot == "User's reply confirmed as ABC cake shop."
    assert label == "E"


def test_parse_output_bare_letter_outside_options(poi_graph):
    options = candidate_options(poi_graph, "s2")  # A, B, C
    cot, label = parse_output("D", options)
    assert cot == ""
    assert label == "D"
    assert label not in options.labels  # validation will mark it invalid


def test_parse_output_empty():
    assert parse_output("", None) == ("", None)


def test_parse_output_trailing_noise(cake_shop_graph):
    options = candidate_options(cake_shop_graph, "s0")
    cot, label = parse_output("Reasoning done.\nB.\n", options)
    assert label == "B"


def test_fallback_invalid_with_last_valid_repeats(cake_shop_graph):
    session = start_session(cake_shop_graph)
    session.last_valid_query = "previous answer"
    options = candidate_options(cake_shop_graph, "s0")
    action = validate_and_fallback(_record_for(session, options, "D"), session)
    assert action.kind == REPEAT_LAST_VALID
    assert action.query == "previous answer"
    assert session.retry_count == 1


def test_fallback_fourth_invalid_reissues_and_resets(cake_shop_graph):
    session = start_session(cake_shop_graph)
    session.last_valid_query = "previous answer"
    options = candidate_options(cake_shop_graph, "s0")
    kinds = []
    for _ in range(4):
        kinds.append(validate_and_fallback(_record_for(session, options, "Z"), session).kind)
    assert kinds == [REPEAT_LAST_VALID] * 3 + [REISSUE_ORIGINAL]
    assert session.retry_count == 0  # reset after reissue
    # the reissued question becomes the new last valid text
    assert session.last_valid_query == session.original_question


def test_fallback_no_last_valid_goes_straight_to_reissue(cake_shop_graph):
    session = start_session(cake_shop_graph)
    options = candidate_options(cake_shop_graph, "s0")
    action = validate_and_fallback(_record_for(session, options, None, raw=""), session)
    assert action.kind == REISSUE_ORIGINAL
    assert session.retry_count == 0


def test_fallback_valid_emits_and_resets(cake_shop_graph):
    session = start_session(cake_shop_graph)
    session.retry_count = 2
    options = candidate_options(cake_shop_graph, "s0")
    action = validate_and_fallback(_record_for(session, options, "A"), session)
    assert action.kind == EMIT
    assert action.query == "Are you currently open for business?"
    assert session.retry_count == 0


def test_step_advances_on_affirm(cake_shop_graph):
    session = start_session(cake_shop_graph)
    action, session, record = step(session, _oracle_policy(cake_shop_graph), "Yes")
    assert record.valid
    assert action.kind == EMIT
    assert session.current_state == "s1"  # replayed against the FSM
    assert session.history[-1].state == "s1"


def test_step_timeout_falls_back_without_state_change(cake_shop_graph):
    profile = BackendProfile(role="policy", kind="mock", identifier="hang",
                             deadline_ms=30, options={"behavior": "hang", "hang_ms": 2000})
    policy = LlmGateway(profile, graph=cake_shop_graph)
    session = start_session(cake_shop_graph)
    session.last_valid_query = "say again please"
    action, session, record = step(session, policy, "Yes")
    assert record.timed_out and not record.valid
    assert action.kind == REPEAT_LAST_VALID
    assert action.query == "say again please"
    assert session.current_state == "s0"


def test_step_terminal_transition_completes_with_attributes(cake_shop_graph):
    session = start_session(cake_shop_graph)
    policy = _oracle_policy(cake_shop_graph)
    step(session, policy, "Yes")                      # s0 -> s1 (name confirmed)
    step(session, policy, "We closed down for good")  # s1 -> s3 terminal
    assert session.outcome == COMPLETED
    assert session.acquired == {"name": "affirm", "business-status": "closed"}


def test_step_budget_exhaustion_marks_abandoned(cake_shop_graph):
    session = start_session(cake_shop_graph, budget=1)
    with pytest.raises(TurnBudgetExhausted):
        step(session, _oracle_policy(cake_shop_graph), "Yes")
    assert session.outcome == ABANDONED


def test_run_session_cooperative_completes(cake_shop_graph):
    rng = random.Random(5)
    agent = make_user_agent(OwnerProfile(), cake_shop_graph, rng)
    turns, records, outcome = run_session(cake_shop_graph, _oracle_policy(cake_shop_graph), agent)
    assert outcome == COMPLETED
    assert turns[-1].state == "s3"
    assert all(r.valid for r in records)
    assert all(t.success for t in turns[:-1])


def test_run_session_budget_one_abandons(cake_shop_graph):
    agent = make_user_agent(OwnerProfile(), cake_shop_graph, random.Random(0))
    turns, records, outcome = run_session(cake_shop_graph, _oracle_policy(cake_shop_graph), agent, budget=1)
    assert outcome == ABANDONED
    assert records == []
    assert len(turns) == 1


def _scan_for_hallucinations(graph, turns):
    violations = []
    for turn in turns:
        allowed = {o.agent_query for o in candidate_options(graph, turn.state).options}
        allowed.add(graph.query_of(turn.state))
        if turn.agent_query not in allowed:
            violations.append(turn)
    return violations


def test_adversarial_sessions_emit_nothing_outside_candidate_set(cake_shop_graph):
    profile = BackendProfile(role="policy", kind="mock", identifier="adv", seed=13,
                             options={"behavior": "adversarial",
                                      "invalid_label_probability": 0.4})
    policy = LlmGateway(profile, graph=cake_shop_graph)
    rng = random.Random(21)
    agent = make_user_agent(OwnerProfile(), cake_shop_graph, rng)
    for _ in range(60):
        turns, records, outcome = run_session(cake_shop_graph, policy, agent)
        assert _scan_for_hallucinations(cake_shop_graph, turns) == []
        assert all(t.retry_count <= 3 for t in turns)
        for turn in turns:
            if turn.action_kind == REISSUE_ORIGINAL:
                assert turn.retry_count == 0


def test_run_session_state_monotonicity(cake_shop_graph):
    # state changes only between consecutive turns linked by a declared transition
    profile = BackendProfile(role="policy", kind="mock", identifier="adv", seed=3,
                             options={"behavior": "adversarial",
                                      "invalid_label_probability": 0.3})
    policy = LlmGateway(profile, graph=cake_shop_graph)
    agent = make_user_agent(OwnerProfile(), cake_shop_graph, random.Random(9))
    turns, _, _ = run_session(cake_shop_graph, policy, agent)
    for prev, cur in zip(turns, turns[1:]):
        if prev.state != cur.state:
            assert any(
                t.target == cur.state for t in cake_shop_graph.outgoing[prev.state]
            )
