"""Balanced training-corpus synthesis over the dialogue FSM.

Production logs are long-tailed; training data is rebalanced by sampling the
path length category uniformly, then the path, then each user reply uniformly
from the transition's historical variants. The resulting corpus replays
validly through the FSM by construction.
"""

from __future__ import annotations

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .fsm import FsmGraph, StateId, Transition, candidate_options, enumerate_paths, transitions_between
from .seeds import derive_rng
from .templates import render_cot, render_prompt

logger = logging.getLogger(__name__)

DEFAULT_CORPUS_SIZE = 5000
# exact-duplicate resampling gives up after this many attempts per requested dialogue
DEDUP_ATTEMPT_FACTOR = 10


@dataclass(frozen=True)
class DialogueTurn:
    agent_query: str
    user_reply: str
    transition: Transition


@dataclass(frozen=True)
class SyntheticDialogue:
    path: tuple[StateId, ...]
    turns: tuple[DialogueTurn, ...]
    seed: int


@dataclass(frozen=True)
class TrainingExample:
    prompt: str
    target_cot: str
    target_label: str
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        record = {
            "prompt": self.prompt,
            "target_cot": self.target_cot,
            "target_label": self.target_label,
            "meta": self.meta,
        }
        return json.dumps(record, sort_keys=True)


def sample_path(
    groups: dict[int, list[tuple[StateId, ...]]],
    rng: random.Random,
) -> tuple[StateId, ...]:
    """Uniform over length categories, then uniform within the chosen category."""
    if not groups:
        raise ValueError("empty path groups")
    lengths = sorted(groups)
    length = lengths[rng.randrange(len(lengths))]
    members = groups[length]
    return members[rng.randrange(len(members))]


def sample_reply(transition: Transition, rng: random.Random) -> str:
    """Uniform over reply variants; empirical weights are ignored on purpose here.

    Augmentation rebalances toward uniform coverage; the user simulator is the
    place where the natural weighted distribution lives.
    """
    if not transition.reply_variants:
        raise ValueError("transition has no reply variants")
    return transition.reply_variants[rng.randrange(len(transition.reply_variants))]


def synthesize_dialogue(
    graph: FsmGraph,
    path: tuple[StateId, ...] | list[StateId],
    rng: random.Random,
    seed: int = 0,
) -> SyntheticDialogue:
    """Fill one turn per path edge: the source state's query plus a sampled reply."""
    turns: list[DialogueTurn] = []
    for source, target in zip(path, path[1:]):
        parallel = transitions_between(graph, source, target)
        if not parallel:
            raise ValueError(f"path step {source}->{target} has no transition")
        transition = parallel[rng.randrange(len(parallel))]
        turns.append(
            DialogueTurn(
                agent_query=graph.query_of(source),
                user_reply=sample_reply(transition, rng),
                transition=transition,
            )
        )
    return SyntheticDialogue(path=tuple(path), turns=tuple(turns), seed=seed)


def to_training_examples(
    dialogue: SyntheticDialogue,
    graph: FsmGraph,
    template_version: str = "v1",
    dialogue_id: str | None = None,
) -> list[TrainingExample]:
    """One example per turn: prompt = history through that turn's reply + options.

    The target label is the option letter of the transition actually taken;
    the target CoT is the deterministic fill-in template.
    """
    examples: list[TrainingExample] = []
    history: list[tuple[str, str | None]] = []
    for index, turn in enumerate(dialogue.turns):
        state = dialogue.path[index]
        options = candidate_options(graph, state)
        history.append((turn.agent_query, turn.user_reply))
        outgoing = graph.outgoing[state]
        label = options.options[outgoing.index(turn.transition)].label
        goal = graph.states_by_id[turn.transition.target].attribute
        examples.append(
            TrainingExample(
                prompt=render_prompt(history, options, template_version),
                target_cot=render_cot(turn.transition.reply_class, goal),
                target_label=label,
                meta={
                    "seed": dialogue.seed,
                    "path": list(dialogue.path),
                    "template_version": template_version,
                    "dialogue_id": dialogue_id or f"d{dialogue.seed}",
                    "turn_index": index,
                    "user_reply": turn.user_reply,
                },
            )
        )
    return examples


def _dialogue_key(dialogue: SyntheticDialogue) -> tuple:
    return (dialogue.path, tuple(t.user_reply for t in dialogue.turns))


def generate_corpus(
    graph: FsmGraph,
    n: int,
    master_seed: int,
    max_length: int = 16,
) -> list[SyntheticDialogue]:
    """Sample n dialogues with per-dialogue derived RNG streams.

    Exact duplicates (same path and same replies) are dropped and resampled up
    to DEDUP_ATTEMPT_FACTOR * n attempts; past that, duplicates are admitted so
    small FSMs still yield n dialogues.
    """
    groups = enumerate_paths(graph, max_length)
    dialogues: list[SyntheticDialogue] = []
    seen: set[tuple] = set()
    attempt = 0
    budget = DEDUP_ATTEMPT_FACTOR * n
    while len(dialogues) < n:
        rng = derive_rng(master_seed, "dialogue", attempt)
        path = sample_path(groups, rng)
        dialogue = synthesize_dialogue(graph, path, rng, seed=attempt)
        attempt += 1
        key = _dialogue_key(dialogue)
        if key in seen and attempt <= budget:
            continue
        if key in seen:
            logger.debug("dedup budget exhausted at attempt %d; admitting duplicate", attempt)
        seen.add(key)
        dialogues.append(dialogue)
    return dialogues


@dataclass(frozen=True)
class DistributionReport:
    reply_counts: dict[str, int]
    turn_counts: dict[int, int]
    reply_max_deviation: float
    turn_max_deviation: float

    def to_dict(self) -> dict:
        return {
            "reply_counts": dict(sorted(self.reply_counts.items())),
            "turn_counts": {str(k): v for k, v in sorted(self.turn_counts.items())},
            "reply_max_deviation": self.reply_max_deviation,
            "turn_max_deviation": self.turn_max_deviation,
        }


def _max_deviation(counts: Counter) -> float:
    total = sum(counts.values())
    bins = len(counts)
    if total == 0 or bins == 0:
        return 0.0
    uniform = 1.0 / bins
    return max(abs(c / total - uniform) for c in counts.values())


def distribution_report(dialogues: list[SyntheticDialogue]) -> DistributionReport:
    """Histogram the corpus by reply text and by turn count, with deviation stats."""
    if not dialogues:
        raise ValueError("empty corpus")
    replies: Counter = Counter()
    turns: Counter = Counter()
    for d in dialogues:
        turns[len(d.turns)] += 1
        for t in d.turns:
            replies[t.user_reply] += 1
    return DistributionReport(
        reply_counts=dict(replies),
        turn_counts=dict(turns),
        reply_max_deviation=_max_deviation(replies),
        turn_max_deviation=_max_deviation(turns),
    )


def write_examples_jsonl(examples: list[TrainingExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(example.to_json() + "\n")


def read_examples_jsonl(path: str | Path) -> list[TrainingExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            examples.append(
                TrainingExample(
                    prompt=record["prompt"],
                    target_cot=record["target_cot"],
                    target_label=record["target_label"],
                    meta=record.get("meta", {}),
                )
            )
    return examples


def report_from_examples(examples: list[TrainingExample]) -> DistributionReport:
    """Recover corpus histograms from a written JSONL (uses per-example meta)."""
    if not examples:
        raise ValueError("empty corpus")
    replies: Counter = Counter()
    dialogue_turns: dict[str, int] = {}
    for example in examples:
        replies[example.meta["user_reply"]] += 1
        did = example.meta["dialogue_id"]
        dialogue_turns[did] = max(dialogue_turns.get(did, 0), example.meta["turn_index"] + 1)
    turns: Counter = Counter(dialogue_turns.values())
    return DistributionReport(
        reply_counts=dict(replies),
        turn_counts=dict(turns),
        reply_max_deviation=_max_deviation(replies),
        turn_max_deviation=_max_deviation(turns),
    )
