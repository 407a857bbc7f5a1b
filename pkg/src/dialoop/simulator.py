"""Scripted POI-owner simulator: weighted replies, ASR-style noise, test sets.

Replies follow either the configured empirical per-state distribution or a
uniform one; surface noise (near-homophone substitutions plus character-level
insert/delete) is applied after selection, so the retained ground-truth
transition stays exact for scoring.
"""

from __future__ import annotations

import math
import random
import string
from dataclasses import dataclass, field

from .fsm import FsmGraph, StateId, Transition, candidate_options

EMPIRICAL = "empirical"
UNIFORM = "uniform"

EFFECT = "effect"
GENERAL = "general"
ROBUST = "robust"


@dataclass(frozen=True)
class NoiseConfig:
    """Surface corruption model; each confusion entry fires independently."""

    confusion_table: tuple[tuple[str, str, float], ...] = ()
    insertion_rate: float = 0.0
    deletion_rate: float = 0.0

    def __post_init__(self):
        for phrase, _, p in self.confusion_table:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"confusion probability {p} for {phrase!r} outside [0, 1]")
        for rate in (self.insertion_rate, self.deletion_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"char rate {rate} outside [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseConfig":
        return cls(
            confusion_table=tuple(
                (e["phrase"], e["replacement"], e["probability"])
                for e in data.get("confusion_table", [])
            ),
            insertion_rate=data.get("insertion_rate", 0.0),
            deletion_rate=data.get("deletion_rate", 0.0),
        )


@dataclass(frozen=True)
class OwnerProfile:
    """Reply behavior: empirical per-state class weights or uniform."""

    mode: str = UNIFORM
    transition_weights: dict = field(default_factory=dict)  # state -> {reply_class: weight}
    noise: NoiseConfig = NoiseConfig()
    long_reply_ratio: float | None = None

    def __post_init__(self):
        if self.mode not in (EMPIRICAL, UNIFORM):
            raise ValueError(f"unknown profile mode {self.mode!r}")
        for state, weights in self.transition_weights.items():
            total = sum(weights.values())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"weights for state {state} sum to {total}, not 1")

    @classmethod
    def from_dict(cls, data: dict) -> "OwnerProfile":
        return cls(
            mode=data.get("mode", UNIFORM),
            transition_weights=data.get("transition_weights", {}),
            noise=NoiseConfig.from_dict(data.get("noise", {})),
            long_reply_ratio=data.get("long_reply_ratio"),
        )


def inject_asr_noise(utterance: str, noise: NoiseConfig, rng: random.Random) -> str:
    """Apply confusion substitutions then character noise; selection unaffected."""
    out = utterance
    for phrase, replacement, probability in noise.confusion_table:
        if phrase in out and rng.random() < probability:
            out = out.replace(phrase, replacement)
    if noise.insertion_rate == 0.0 and noise.deletion_rate == 0.0:
        return out
    chars: list[str] = []
    for ch in out:
        if noise.deletion_rate and rng.random() < noise.deletion_rate:
            continue
        chars.append(ch)
        if noise.insertion_rate and rng.random() < noise.insertion_rate:
            chars.append(rng.choice(string.ascii_lowercase))
    return "".join(chars)


def _pick_transition(profile: OwnerProfile, graph: FsmGraph, state: StateId,
                     rng: random.Random) -> Transition:
    outgoing = graph.outgoing[state]
    if profile.mode == EMPIRICAL and state in profile.transition_weights:
        weights = profile.transition_weights[state]
        cum = []
        total = 0.0
        for t in outgoing:
            total += weights.get(t.reply_class, 0.0)
            cum.append(total)
        if total <= 0.0:
            return outgoing[rng.randrange(len(outgoing))]
        roll = rng.random() * total
        for t, edge in zip(outgoing, cum):
            if roll < edge:
                return t
        return outgoing[-1]
    return outgoing[rng.randrange(len(outgoing))]


def _pick_variant(profile: OwnerProfile, transition: Transition, rng: random.Random) -> str:
    variants = transition.reply_variants
    if profile.long_reply_ratio is not None and len(variants) > 1:
        ranked = sorted(variants, key=len)
        half = len(ranked) // 2
        bucket = ranked[half:] if rng.random() < profile.long_reply_ratio else ranked[:half]
        if bucket:
            return bucket[rng.randrange(len(bucket))]
    if profile.mode == EMPIRICAL and transition.weights is not None:
        roll = rng.random() * sum(transition.weights)
        acc = 0.0
        for variant, w in zip(variants, transition.weights):
            acc += w
            if roll < acc:
                return variant
        return variants[-1]
    return variants[rng.randrange(len(variants))]


def respond(
    profile: OwnerProfile,
    graph: FsmGraph,
    state: StateId,
    rng: random.Random,
) -> tuple[str, Transition]:
    """Sample the owner's reply at a state; ground truth survives noise."""
    if graph.is_terminal(state):
        raise ValueError(f"terminal state {state} takes no reply")
    transition = _pick_transition(profile, graph, state, rng)
    utterance = _pick_variant(profile, transition, rng)
    return inject_asr_noise(utterance, profile.noise, rng), transition


def make_user_agent(profile: OwnerProfile, graph: FsmGraph, rng: random.Random):
    """Bind respond() into the dialogue manager's user-agent callable."""

    def _agent(state: StateId) -> tuple[str, Transition]:
        return respond(profile, graph, state, rng)

    return _agent


@dataclass(frozen=True)
class TestItem:
    utterance: str
    state: StateId
    gold_label: str
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "utterance": self.utterance,
            "state": self.state,
            "gold_label": self.gold_label,
            "provenance": self.provenance,
        }


def _reply_pool(graph: FsmGraph) -> list[tuple[StateId, int, int]]:
    """All (state, transition index, variant index) single-turn reply slots."""
    pool = []
    for state in graph.states:
        if graph.is_terminal(state.id):
            continue
        for t_index, transition in enumerate(graph.outgoing[state.id]):
            for v_index in range(len(transition.reply_variants)):
                pool.append((state.id, t_index, v_index))
    return pool


def _length_threshold(graph: FsmGraph, percentile: float = 0.9) -> int:
    lengths = sorted(
        len(v) for t in graph.transitions for v in t.reply_variants
    )
    index = max(0, math.ceil(percentile * len(lengths)) - 1)
    return lengths[index]


def _item(graph: FsmGraph, entry: tuple[StateId, int, int], kind: str,
          utterance: str, perturbed: bool) -> TestItem:
    state, t_index, v_index = entry
    options = candidate_options(graph, state)
    transition = graph.outgoing[state][t_index]
    return TestItem(
        utterance=utterance,
        state=state,
        gold_label=options.options[t_index].label,
        provenance={
            "kind": kind,
            "reply_class": transition.reply_class,
            "variant_index": v_index,
            "perturbed": perturbed,
        },
    )


def _utterance_of(graph: FsmGraph, entry: tuple[StateId, int, int]) -> str:
    state, t_index, v_index = entry
    return graph.outgoing[state][t_index].reply_variants[v_index]


def _entry_weight(graph: FsmGraph, profile: OwnerProfile | None,
                  entry: tuple[StateId, int, int]) -> float:
    state, t_index, v_index = entry
    transition = graph.outgoing[state][t_index]
    class_weight = 1.0
    if profile is not None and state in profile.transition_weights:
        class_weight = profile.transition_weights[state].get(transition.reply_class, 0.0)
    variant_weight = 1.0
    if transition.weights is not None:
        variant_weight = transition.weights[v_index]
    return class_weight * variant_weight


def _weighted_pick(pool: list, weights: list[float], rng: random.Random):
    total = sum(weights)
    roll = rng.random() * total
    acc = 0.0
    for entry, w in zip(pool, weights):
        acc += w
        if roll < acc:
            return entry
    return pool[-1]


def build_testset(
    graph: FsmGraph,
    profile_kind: str,
    n: int,
    rng: random.Random,
    profile: OwnerProfile | None = None,
    min_length: int | None = None,
    length_percentile: float = 0.9,
) -> list[TestItem]:
    """Sample a labeled single-turn test set in one of three profiles.

    general: uniform over unique replies. effect: weighted by the configured
    natural distribution (per-state class weights times per-variant weights).
    robust: only long replies (length >= min_length, defaulting to the corpus
    length percentile) or replies perturbed by a confusion-table substitution;
    raises when neither exists.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = _reply_pool(graph)
    if not pool:
        raise ValueError("graph has no sampleable replies")

    if profile_kind == GENERAL:
        items = []
        for _ in range(n):
            entry = pool[rng.randrange(len(pool))]
            items.append(_item(graph, entry, GENERAL, _utterance_of(graph, entry), False))
        return items

    if profile_kind == EFFECT:
        weights = [_entry_weight(graph, profile, e) for e in pool]
        if sum(weights) <= 0.0:
            raise ValueError("effect mode needs positive weights")
        items = []
        for _ in range(n):
            entry = _weighted_pick(pool, weights, rng)
            items.append(_item(graph, entry, EFFECT, _utterance_of(graph, entry), False))
        return items

    if profile_kind == ROBUST:
        threshold = min_length if min_length is not None else \
            _length_threshold(graph, length_percentile)
        noise = profile.noise if profile is not None else NoiseConfig()
        long_pool = [e for e in pool if len(_utterance_of(graph, e)) >= threshold]
        noisable = [
            e for e in pool
            if any(phrase in _utterance_of(graph, e) for phrase, _, _ in noise.confusion_table)
        ]
        combined = long_pool + [e for e in noisable if e not in long_pool]
        if not combined:
            raise ValueError("robust mode found no long variants and no noisable replies")
        items = []
        for _ in range(n):
            entry = combined[rng.randrange(len(combined))]
            utterance = _utterance_of(graph, entry)
            perturbed = False
            if len(utterance) < threshold:
                # force the matching substitutions so the robustness criterion holds
                for phrase, replacement, _ in noise.confusion_table:
                    if phrase in utterance:
                        utterance = utterance.replace(phrase, replacement)
                        perturbed = True
            item = _item(graph, entry, ROBUST, utterance, perturbed)
            item.provenance["min_length"] = threshold
            items.append(item)
        return items

    raise ValueError(f"unknown test-set kind {profile_kind!r}")
