"""Versioned text templates shared by training-data synthesis and live sessions.

Training prompts and inference prompts must be byte-identical for the same
dialogue prefix, so both the augmentor and the dialogue manager render
through this module. Template versions are frozen; new wording means a new
version id.
"""

from __future__ import annotations

import re

from .fsm import OptionSet

PROMPT_VERSIONS = ("v1",)
COT_VERSIONS = ("v1",)
EVAL_VERSIONS = ("v1",)

WRAP_UP_GOAL = "wrap-up"

_PROMPT_HEADER = (
    "You are a telephone agent verifying business information for a map service.\n"
    "Pick the next agent query from the lettered options.\n"
)
_PROMPT_INSTRUCTION = (
    "Answer with one short sentence classifying the user's reply, "
    "then the single letter of the chosen option on its own."
)


class UnknownTemplateVersion(ValueError):
    pass


def _check_version(version: str, known: tuple[str, ...], kind: str) -> None:
    if version not in known:
        raise UnknownTemplateVersion(f"unknown {kind} template version {version!r}")


def render_prompt(
    turns: list[tuple[str, str | None]],
    options: OptionSet,
    template_version: str = "v1",
) -> str:
    """Render the selective-generation prompt: header, history, options, instruction.

    `turns` is the ordered (agent_query, user_reply) history; a None reply is
    skipped (pending turn). Deterministic: same inputs, same bytes.
    """
    _check_version(template_version, PROMPT_VERSIONS, "prompt")
    lines = [_PROMPT_HEADER, "Conversation so far:"]
    for agent_query, user_reply in turns:
        lines.append(f"Agent: {agent_query}")
        if user_reply is not None:
            lines.append(f"User: {user_reply}")
    lines.append("Reply options:")
    for option in options.options:
        lines.append(f"{option.label}. {option.agent_query}")
    lines.append(_PROMPT_INSTRUCTION)
    return "\n".join(lines)


def render_cot(reply_class: str, goal: str | None, cot_version: str = "v1") -> str:
    """One-sentence reasoning line: reply-class restatement plus the next goal."""
    _check_version(cot_version, COT_VERSIONS, "cot")
    return f"User's reply taken as {reply_class}; next goal is {goal or WRAP_UP_GOAL}."


def render_guess_cot(cot_version: str = "v1") -> str:
    _check_version(cot_version, COT_VERSIONS, "cot")
    return "User's reply is unclear; choosing the most likely follow-up."


def render_eval_prompt(prompt: str, output: str, eval_version: str = "v1") -> str:
    """Render the evaluation prompt wrapping an (input, candidate output) pair."""
    _check_version(eval_version, EVAL_VERSIONS, "eval")
    return (
        "Review this telephone-agent exchange.\n"
        f"{prompt}\n"
        f"Proposed agent output: {output}\n"
        "Is the selected option correct for the user's latest reply? Answer True or False."
    )


def render_judge_prompt(body: str, prompt_text: str, raw_output: str) -> str:
    """Render the in-context judge prompt from a versioned body and one sample."""
    return f"{body}\nConversation:\n{prompt_text}\nAgent output: {raw_output}\nVerdict:"


_LABEL_TOKEN = re.compile(r"\b([A-Z])\b")


def split_cot_and_label(raw: str) -> tuple[str, str | None]:
    """Split model output into (reasoning text, option letter).

    Output grammar: free-text reasoning followed by a final standalone capital
    letter. The last standalone letter wins, tolerating verbose CoT; anything
    after it is ignored. No such token means no label.
    """
    matches = list(_LABEL_TOKEN.finditer(raw or ""))
    if not matches:
        return ((raw or "").strip(), None)
    last = matches[-1]
    return (raw[: last.start()].strip(), last.group(1))


DEFAULT_JUDGE_PROMPT_V0 = (
    "You review phone dialogues in which an agent selects its next query from lettered options.\n"
    "Mark the agent output incorrect when any listed criterion applies.\n"
    "Criteria:\n"
    "- the selected option ignores or contradicts the user's latest reply\n"
    'Respond with "True" when the output is correct, otherwise "False: <criterion>".'
)


def append_judge_criteria(body: str, criteria: list[str]) -> str:
    """Insert new criterion lines after the existing criteria block."""
    lines = body.splitlines()
    last_criterion = max(i for i, line in enumerate(lines) if line.startswith("- "))
    new_lines = [f"- {c}" for c in criteria]
    return "\n".join(lines[: last_criterion + 1] + new_lines + lines[last_criterion + 1 :])
