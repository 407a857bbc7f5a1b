"""Run metrics: consistency rate, task success rate, hallucination rate, latency.

Ratios are computed from integer counts; the only float step is the final
division. TSR's denominator counts query prompts, not sessions, and repeated
or reissued questions count as prompts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .fsm import FsmGraph, candidate_options
from .manager import GenerationRecord, Turn


def compute_cr(judgments: Sequence[bool]) -> float | None:
    """Fraction of single-turn responses judged correct; None on empty input."""
    if not judgments:
        return None
    return sum(1 for j in judgments if j) / len(judgments)


def compute_tsr(success_flags: Sequence[bool]) -> float:
    """Successful attribute acquisitions per issued query prompt."""
    if not success_flags:
        raise ValueError("zero query prompts")
    return sum(1 for s in success_flags if s) / len(success_flags)


def tsr_flags(transcripts: Iterable[list[Turn]], graph: FsmGraph) -> list[bool]:
    """Per-prompt success flags: every non-terminal agent query is a prompt."""
    flags: list[bool] = []
    for turns in transcripts:
        for turn in turns:
            if graph.is_terminal(turn.state):
                continue
            flags.append(bool(turn.success))
    return flags


def hallucination_rate(transcripts: Iterable[list[Turn]], graph: FsmGraph) -> float | None:
    """Fraction of emitted agent queries outside candidate set + original question.

    Post-validation metric: the raw model invalid-output rate is a separate
    number (raw_invalid_rate). None when no agent queries exist.
    """
    total = 0
    outside = 0
    for turns in transcripts:
        for turn in turns:
            total += 1
            allowed = {o.agent_query for o in candidate_options(graph, turn.state).options}
            allowed.add(graph.query_of(turn.state))
            if turn.agent_query not in allowed:
                outside += 1
    if total == 0:
        return None
    return outside / total


def attribute_breakdown(
    transcripts: Iterable[list[Turn]], graph: FsmGraph
) -> dict[str, dict[str, int]]:
    """Per-attribute prompt/success counts; no blending into a single number."""
    table: dict[str, dict[str, int]] = {}
    for turns in transcripts:
        for turn in turns:
            attribute = graph.states_by_id[turn.state].attribute
            if attribute is None:
                continue
            entry = table.setdefault(attribute, {"prompts": 0, "successes": 0})
            entry["prompts"] += 1
            entry["successes"] += 1 if turn.success else 0
    return table


def raw_invalid_rate(records: Sequence[GenerationRecord]) -> float | None:
    """Fraction of raw model outputs that failed validation (pre-fallback)."""
    if not records:
        return None
    return sum(1 for r in records if not r.valid) / len(records)


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile; q in [0, 100]."""
    if not values:
        raise ValueError("no values")
    ranked = sorted(values)
    rank = max(0, math.ceil(q / 100.0 * len(ranked)) - 1)
    return ranked[rank]


def latency_summary(turns: Iterable[Turn]) -> dict:
    totals = []
    overheads = []
    for turn in turns:
        if turn.action_kind == "open":
            continue
        totals.append(turn.latency_ms)
        overheads.append(turn.overhead_ms)
    if not totals:
        return {"p50_ms": None, "p99_ms": None, "overhead_p50_ms": None, "overhead_p99_ms": None}
    return {
        "p50_ms": percentile(totals, 50),
        "p99_ms": percentile(totals, 99),
        "overhead_p50_ms": percentile(overheads, 50),
        "overhead_p99_ms": percentile(overheads, 99),
    }


@dataclass(frozen=True)
class MetricsSnapshot:
    cr: float | None = None
    tsr: float | None = None
    hallucination_rate: float | None = None
    human_judge_ratio: float | None = None
    latency: dict | None = None
    counts: dict | None = None

    def __post_init__(self):
        for name in ("cr", "tsr", "hallucination_rate", "human_judge_ratio"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} {value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "cr": self.cr,
            "tsr": self.tsr,
            "hallucination_rate": self.hallucination_rate,
            "human_judge_ratio": self.human_judge_ratio,
            "latency": self.latency,
            "counts": self.counts,
        }


def snapshot(
    judgments: Sequence[bool] = (),
    transcripts: Sequence[list[Turn]] = (),
    graph: FsmGraph | None = None,
    human_queue_size: int | None = None,
    routed_total: int | None = None,
) -> MetricsSnapshot:
    """Assemble a snapshot from whatever evidence is on hand."""
    cr = compute_cr(judgments)
    tsr = None
    halluc = None
    latency = None
    counts: dict = {"N": len(judgments), "N_C": sum(1 for j in judgments if j)}
    if transcripts and graph is not None:
        flags = tsr_flags(transcripts, graph)
        counts["N_T"] = len(flags)
        counts["N_S"] = sum(1 for f in flags if f)
        tsr = compute_tsr(flags) if flags else None
        halluc = hallucination_rate(transcripts, graph)
        latency = latency_summary(t for turns in transcripts for t in turns)
    ratio = None
    if human_queue_size is not None and routed_total:
        ratio = human_queue_size / routed_total
    return MetricsSnapshot(
        cr=cr,
        tsr=tsr,
        hallucination_rate=halluc,
        human_judge_ratio=ratio,
        latency=latency,
        counts=counts,
    )
