"""Dual-evaluator confidence scoring and the vote-and-route policy.

The fine-tuned evaluator contributes two numbers per sample: a length-
normalized sequence likelihood (geometric mean of target-token probabilities,
computed in the log domain) and a discriminative two-label softmax. Their
convex combination is compared against the black-box judge's categorical
verdict; the routing table below decides accept, reject, or human review.

Routing table (precedence top to bottom):

    judge = uncertain                      -> human_review / judge_uncertain
    previous c known and c jumped >= delta -> human_review / score_jump
    c >= t_hi and judge = correct          -> auto_accept  / high_agree
    c <= t_lo and judge = incorrect        -> auto_reject  / low_agree
    c >= t_hi and judge = incorrect        -> human_review / evaluator_disagreement
    c <= t_lo and judge = correct          -> human_review / evaluator_disagreement
    t_lo < c < t_hi                        -> human_review / uncertainty_band
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .gateway import JudgeVerdict, LlmGateway, TokenScore
from .manager import GenerationRecord
from .templates import render_eval_prompt

DEFAULT_ALPHA = 0.1
DEFAULT_T_HI = 0.9
DEFAULT_T_LO = 0.3
DEFAULT_SCORE_JUMP_DELTA = 0.15

AUTO_ACCEPT = "auto_accept"
AUTO_REJECT = "auto_reject"
HUMAN_REVIEW = "human_review"

# pseudo-target used when a record carries no scorable output (timeout, empty)
EMPTY_OUTPUT_TOKEN = "<empty>"
EMPTY_OUTPUT_PROBABILITY = 1e-12


@dataclass(frozen=True)
class Thresholds:
    t_hi: float = DEFAULT_T_HI
    t_lo: float = DEFAULT_T_LO

    def __post_init__(self):
        if not 0.0 <= self.t_lo < self.t_hi <= 1.0:
            raise ValueError(f"need 0 <= t_lo < t_hi <= 1, got ({self.t_lo}, {self.t_hi})")


_ROUTING_TABLE = {
    AUTO_ACCEPT: ("high_agree",),
    AUTO_REJECT: ("low_agree",),
    HUMAN_REVIEW: ("evaluator_disagreement", "uncertainty_band", "judge_uncertain",
                   "score_jump"),
}


@dataclass(frozen=True)
class RoutingDecision:
    kind: str
    reason: str

    def __post_init__(self):
        if self.reason not in _ROUTING_TABLE.get(self.kind, ()):
            raise ValueError(f"({self.kind}, {self.reason}) is not in the routing table")


@dataclass(frozen=True)
class ConfidenceReport:
    p_gen: float
    p_disc: float
    alpha: float
    c: float
    judge: JudgeVerdict
    routing: RoutingDecision

    def __post_init__(self):
        expected = (1.0 - self.alpha) * self.p_gen + self.alpha * self.p_disc
        if abs(self.c - expected) > 1e-12:
            raise ValueError(f"c={self.c} is not the convex combination {expected}")

    def to_dict(self) -> dict:
        return {
            "p_gen": self.p_gen,
            "p_disc": self.p_disc,
            "alpha": self.alpha,
            "c": self.c,
            "judge": {
                "label": self.judge.label,
                "rationale": self.judge.rationale,
                "prompt_version": self.judge.prompt_version,
            },
            "routing": {"kind": self.routing.kind, "reason": self.routing.reason},
        }


@dataclass(frozen=True)
class EvalPair:
    prompt: str
    output: str
    label: int  # 1 positive, 0 negative
    eval_prompt: str

    def to_dict(self) -> dict:
        return {"prompt": self.prompt, "output": self.output, "label": self.label,
                "eval_prompt": self.eval_prompt}


def generative_score(token_scores: list[TokenScore]) -> float:
    """Geometric mean of target-token probabilities, in the log domain."""
    if not token_scores:
        raise ValueError("empty token score list")
    logs = []
    for score in token_scores:
        if not 0.0 < score.probability <= 1.0:
            raise ValueError(f"token probability {score.probability} outside (0, 1]")
        logs.append(math.log(score.probability))
    return math.exp(math.fsum(logs) / len(logs))


def discriminative_score(g0: float, g1: float) -> float:
    """Two-label softmax probability of the positive label, max-subtracted."""
    if not (math.isfinite(g0) and math.isfinite(g1)):
        raise ValueError(f"non-finite logits ({g0}, {g1})")
    m = max(g0, g1)
    e0 = math.exp(g0 - m)
    e1 = math.exp(g1 - m)
    return e1 / (e0 + e1)


def combined_confidence(p_gen: float, p_disc: float, alpha: float = DEFAULT_ALPHA) -> float:
    """Convex combination of the two evaluator scores."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    for name, value in (("p_gen", p_gen), ("p_disc", p_disc)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} {value} outside [0, 1]")
    return (1.0 - alpha) * p_gen + alpha * p_disc


def make_eval_pairs(
    positive: GenerationRecord,
    rng: random.Random,
    negative_strategy: str = "uniform_other_option",
) -> tuple[EvalPair, EvalPair] | None:
    """Build the (positive, negative) evaluation pair for one valid record.

    The negative swaps the chosen letter for a uniformly sampled different
    option, with a plausibility-preserving CoT. Returns None when the state has
    a single option (no negative exists); callers log and skip.
    """
    if not positive.valid or positive.parsed_label is None:
        raise ValueError("eval pairs require a valid positive record")
    if negative_strategy != "uniform_other_option":
        raise ValueError(f"unknown negative strategy {negative_strategy!r}")
    others = [o for o in positive.options.options if o.label != positive.parsed_label]
    if not others:
        return None
    negative_option = others[rng.randrange(len(others))]
    negative_output = (
        f"User's reply points at the next step: {negative_option.agent_query} "
        f"{negative_option.label}"
    )
    pos = EvalPair(
        prompt=positive.prompt_text,
        output=positive.raw_output,
        label=1,
        eval_prompt=render_eval_prompt(positive.prompt_text, positive.raw_output),
    )
    neg = EvalPair(
        prompt=positive.prompt_text,
        output=negative_output,
        label=0,
        eval_prompt=render_eval_prompt(positive.prompt_text, negative_output),
    )
    return pos, neg


def vote_and_route(
    c: float,
    judge: JudgeVerdict,
    thresholds: Thresholds = Thresholds(),
    previous_c: float | None = None,
    score_jump_delta: float = DEFAULT_SCORE_JUMP_DELTA,
) -> RoutingDecision:
    """Deterministic, total routing of (confidence, judge verdict) pairs."""
    if judge.label == "uncertain":
        return RoutingDecision(HUMAN_REVIEW, "judge_uncertain")
    if previous_c is not None and c - previous_c >= score_jump_delta:
        return RoutingDecision(HUMAN_REVIEW, "score_jump")
    high = c >= thresholds.t_hi
    low = c <= thresholds.t_lo
    if high and judge.label == "correct":
        return RoutingDecision(AUTO_ACCEPT, "high_agree")
    if low and judge.label == "incorrect":
        return RoutingDecision(AUTO_REJECT, "low_agree")
    if high or low:
        return RoutingDecision(HUMAN_REVIEW, "evaluator_disagreement")
    return RoutingDecision(HUMAN_REVIEW, "uncertainty_band")


def evaluation_error_rate(
    decisions: list[RoutingDecision],
    gold_labels: list[str],
) -> float | None:
    """Fraction of auto decisions contradicting gold; review items excluded.

    Gold labels are "accept" or "reject". Returns None when no auto decisions
    exist (undefined rate).
    """
    if len(decisions) != len(gold_labels):
        raise ValueError(f"{len(decisions)} decisions vs {len(gold_labels)} gold labels")
    auto = 0
    wrong = 0
    for decision, gold in zip(decisions, gold_labels):
        if gold not in ("accept", "reject"):
            raise ValueError(f"gold label {gold!r} not in {{accept, reject}}")
        if decision.kind == HUMAN_REVIEW:
            continue
        auto += 1
        if (decision.kind == AUTO_ACCEPT) != (gold == "accept"):
            wrong += 1
    if auto == 0:
        return None
    return wrong / auto


def score_record(
    record: GenerationRecord,
    evaluator: LlmGateway,
    judge: LlmGateway,
    prompt_version: str,
    thresholds: Thresholds = Thresholds(),
    alpha: float = DEFAULT_ALPHA,
    previous_c: float | None = None,
    score_jump_delta: float = DEFAULT_SCORE_JUMP_DELTA,
    score_target_mode: str = "full",
) -> ConfidenceReport:
    """Run the full ensemble over one record and route it.

    score_target_mode "full" scores the whole output (CoT plus letter);
    "label" scores the option letter alone.
    """
    if score_target_mode == "label":
        target = record.parsed_label or ""
    elif score_target_mode == "full":
        target = record.raw_output
    else:
        raise ValueError(f"unknown score_target_mode {score_target_mode!r}")

    if target.split():
        token_scores = evaluator.score_target(record.prompt_text, target)
    else:
        # nothing to score (timeout or empty output); floor keeps routing total
        token_scores = [TokenScore(EMPTY_OUTPUT_TOKEN, EMPTY_OUTPUT_PROBABILITY)]
    p_gen = generative_score(token_scores)

    eval_prompt = render_eval_prompt(record.prompt_text, record.raw_output)
    g0, g1 = evaluator.judge_logits(eval_prompt)
    p_disc = discriminative_score(g0, g1)

    c = combined_confidence(p_gen, p_disc, alpha)
    verdict = judge.judge_incontext(prompt_version, record)
    routing = vote_and_route(c, verdict, thresholds, previous_c, score_jump_delta)
    return ConfidenceReport(p_gen=p_gen, p_disc=p_disc, alpha=alpha, c=c,
                            judge=verdict, routing=routing)
