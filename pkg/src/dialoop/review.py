"""Human-review queue: items routed for judgment, verdicts, persistence.

Storage is an append-only JSONL event log replayed at load; verdict commits
are serialized per store and first-committed-wins (a second verdict on a
resolved item raises ConflictError). The offline file-drop ingestion path in
the iteration loop uses last-write-wins instead; both rules are documented.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import ConfidenceReport, RoutingDecision
from .fsm import FsmGraph, Option, OptionSet, candidate_options
from .gateway import JudgeVerdict
from .manager import GenerationRecord

PENDING = "pending"
RESOLVED = "resolved"

ACCEPT = "accept"
REJECT = "reject"
CORRECT = "correct"


class ConflictError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReviewVerdict:
    item_id: str
    kind: str  # accept | reject | correct
    new_label: str | None = None
    annotator: str = "anonymous"
    annotation: str | None = None
    timestamp: float | None = None

    def __post_init__(self):
        if self.kind not in (ACCEPT, REJECT, CORRECT):
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if self.kind == CORRECT and not self.new_label:
            raise ValueError("correct verdict requires new_label")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "kind": self.kind,
            "new_label": self.new_label,
            "annotator": self.annotator,
            "annotation": self.annotation,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewVerdict":
        return cls(
            item_id=data["item_id"],
            kind=data["kind"],
            new_label=data.get("new_label"),
            annotator=data.get("annotator", "anonymous"),
            annotation=data.get("annotation"),
            timestamp=data.get("timestamp"),
        )


@dataclass
class ReviewItem:
    item_id: str
    record: GenerationRecord
    report: ConfidenceReport
    reason: str
    round: int = 0
    status: str = PENDING
    verdict: ReviewVerdict | None = None

    def summary(self) -> dict:
        return {
            "item_id": self.item_id,
            "state": self.record.state,
            "reason": self.reason,
            "round": self.round,
            "status": self.status,
            "c": self.report.c,
            "judge_label": self.report.judge.label,
        }

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "record": self.record.to_dict(),
            "report": self.report.to_dict(),
            "reason": self.reason,
            "round": self.round,
            "status": self.status,
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }


def _record_from_dict(data: dict) -> GenerationRecord:
    options = OptionSet(
        state=data["state"],
        options=tuple(Option(label=l, agent_query=q, target=t) for l, q, t in data["options"]),
    )
    return GenerationRecord(
        prompt_text=data["prompt_text"],
        raw_output=data["raw_output"],
        parsed_cot=data["parsed_cot"],
        parsed_label=data["parsed_label"],
        valid=data["valid"],
        state=data["state"],
        options=options,
        timed_out=data.get("timed_out", False),
    )


def _report_from_dict(data: dict) -> ConfidenceReport:
    return ConfidenceReport(
        p_gen=data["p_gen"],
        p_disc=data["p_disc"],
        alpha=data["alpha"],
        c=data["c"],
        judge=JudgeVerdict(
            label=data["judge"]["label"],
            rationale=data["judge"]["rationale"],
            prompt_version=data["judge"]["prompt_version"],
        ),
        routing=RoutingDecision(kind=data["routing"]["kind"], reason=data["routing"]["reason"]),
    )


SNAPSHOT_EVERY = 50


class ReviewStore:
    """Event-sourced queue shared by the HTTP service and the iteration loop.

    The append-only event log is the source of truth and is replayed at load;
    a snapshot of the full state is written every SNAPSHOT_EVERY commits (and
    on demand) as an audit/debugging convenience.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._events_path = self.root / "events.jsonl"
        self._snapshot_path = self.root / "snapshot.json"
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._commits_since_snapshot = 0
        if self._events_path.exists():
            self._replay()

    def _replay(self):
        with open(self._events_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["event"] == "enqueue":
                    item = ReviewItem(
                        item_id=event["item"]["item_id"],
                        record=_record_from_dict(event["item"]["record"]),
                        report=_report_from_dict(event["item"]["report"]),
                        reason=event["item"]["reason"],
                        round=event["item"]["round"],
                    )
                    self._items[item.item_id] = item
                elif event["event"] == "verdict":
                    verdict = ReviewVerdict.from_dict(event["verdict"])
                    item = self._items[verdict.item_id]
                    item.status = RESOLVED
                    item.verdict = verdict

    def _append_event(self, event: dict):
        # single-line append + flush + fsync: a verdict is durable once committed
        with open(self._events_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def enqueue(self, items: list[ReviewItem]):
        with self._lock:
            for item in items:
                if item.item_id in self._items:
                    raise ValueError(f"duplicate item id {item.item_id}")
                self._items[item.item_id] = item
                self._append_event({"event": "enqueue", "item": item.to_dict()})

    def get(self, item_id: str) -> ReviewItem:
        item = self._items.get(item_id)
        if item is None:
            raise KeyError(f"unknown review item {item_id!r}")
        return item

    def items(self, status: str | None = None, reason: str | None = None,
              round_index: int | None = None) -> list[ReviewItem]:
        out = []
        for item in self._items.values():  # insertion order = enqueue order
            if status is not None and item.status != status:
                continue
            if reason is not None and item.reason != reason:
                continue
            if round_index is not None and item.round != round_index:
                continue
            out.append(item)
        return out

    def counts_by_reason(self, status: str | None = PENDING) -> dict[str, int]:
        counts: dict[str, int] = {}
        for item in self.items(status=status):
            counts[item.reason] = counts.get(item.reason, 0) + 1
        return counts

    def commit_verdict(self, verdict: ReviewVerdict) -> ReviewItem:
        """First committed verdict wins; later ones get ConflictError."""
        with self._lock:
            item = self.get(verdict.item_id)
            if item.status != PENDING:
                raise ConflictError(f"item {verdict.item_id} already resolved")
            if verdict.kind == CORRECT and verdict.new_label not in item.record.options.labels:
                raise ValueError(
                    f"label {verdict.new_label!r} not among options {item.record.options.labels}"
                )
            if verdict.timestamp is None:
                verdict = ReviewVerdict(**{**verdict.to_dict(), "timestamp": time.time()})
            item.status = RESOLVED
            item.verdict = verdict
            self._append_event({"event": "verdict", "verdict": verdict.to_dict()})
            self._commits_since_snapshot += 1
            if self._commits_since_snapshot >= SNAPSHOT_EVERY:
                self._write_snapshot_locked()
            return item

    def write_snapshot(self):
        with self._lock:
            self._write_snapshot_locked()

    def _write_snapshot_locked(self):
        payload = {"items": [item.to_dict() for item in self._items.values()]}
        self._snapshot_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8"
        )
        self._commits_since_snapshot = 0

    def verdicts(self) -> list[ReviewVerdict]:
        return [i.verdict for i in self._items.values() if i.verdict is not None]


def verdicts_from_file(path: str | Path) -> list[ReviewVerdict]:
    """Offline file-drop verdicts, one JSON object per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ReviewVerdict.from_dict(json.loads(line)))
    return out


def seed_demo_queue(store: ReviewStore, graph: FsmGraph, n: int, seed: int = 0) -> list[ReviewItem]:
    """Fabricate n pending items for console demos and integration tests."""
    import random as _random

    from .templates import render_prompt

    rng = _random.Random(seed)
    reasons = ("uncertainty_band", "evaluator_disagreement", "judge_uncertain")
    askable = [s for s in graph.states if not graph.is_terminal(s.id)]
    items = []
    for index in range(n):
        state = askable[rng.randrange(len(askable))]
        options = candidate_options(graph, state.id)
        transition = graph.outgoing[state.id][rng.randrange(len(options.options))]
        reply = transition.reply_variants[0]
        prompt = render_prompt([(state.query, reply)], options)
        label = options.labels[rng.randrange(len(options.labels))]
        reason = reasons[index % len(reasons)]
        record = GenerationRecord(
            prompt_text=prompt,
            raw_output=f"User's reply needs review. {label}",
            parsed_cot="User's reply needs review.",
            parsed_label=label,
            valid=True,
            state=state.id,
            options=options,
        )
        judge_label = "uncertain" if reason == "judge_uncertain" else (
            "incorrect" if reason == "evaluator_disagreement" else "correct"
        )
        c = 0.99 if reason == "evaluator_disagreement" else 0.5
        report = ConfidenceReport(
            p_gen=c, p_disc=c, alpha=0.1, c=c,
            judge=JudgeVerdict(label=judge_label, rationale="demo", prompt_version="v0"),
            routing=RoutingDecision(kind="human_review", reason=reason),
        )
        items.append(ReviewItem(
            item_id=f"demo-{index}", record=record, report=report, reason=reason,
        ))
    store.enqueue(items)
    return items
