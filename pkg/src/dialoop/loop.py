"""The grow/improve self-training loop with a human-verdict gate.

Each round samples sessions with the current policy, scores every generation
record with the dual ensemble, partitions records into accepted, rejected,
and a human-review queue, then (after verdict ingestion) emits the next
round's datasets, prompt version, metrics, and manifest. Training itself is
external: the loop writes datasets and takes the next policy id from config.

Replayability: identical (master seed, config, scripted backends, verdict
files) reproduce byte-identical manifests and dataset files. Nothing time-
dependent is written to those files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .augment import generate_corpus, to_training_examples, write_examples_jsonl
from .config import RunConfig
from .ensemble import (
    ConfidenceReport,
    Thresholds,
    evaluation_error_rate,
    make_eval_pairs,
    score_record,
)
from .fsm import FsmGraph, load_fsm_path
from .gateway import BackendUnavailable, LlmGateway, profile_from_dict
from .manager import GenerationRecord, run_session
from .prompts import PromptStore
from .review import ReviewItem, ReviewVerdict
from .seeds import derive_rng, derive_seed
from .simulator import OwnerProfile, make_user_agent

logger = logging.getLogger(__name__)

ACCEPTED = "accepted"
REJECTED = "rejected"
HUMAN_QUEUE = "human_queue"


@dataclass
class GrowSample:
    sample_id: str
    record: GenerationRecord
    report: ConfidenceReport
    gold: str  # accept | reject, from the simulator's ground truth
    round: int
    session_index: int
    turn_index: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "round": self.round,
            "session_index": self.session_index,
            "turn_index": self.turn_index,
            "seed": self.seed,
            "gold": self.gold,
            "record": self.record.to_dict(),
            "report": self.report.to_dict(),
        }


@dataclass
class GrowBatch:
    round: int
    samples: list[GrowSample]
    accepted: list[str] = field(default_factory=list)
    rejected: list[str] = field(default_factory=list)
    human_queue: list[str] = field(default_factory=list)
    resolutions: dict[str, ReviewVerdict] = field(default_factory=dict)
    audit: list[str] = field(default_factory=list)
    partial: bool = False

    def by_id(self, sample_id: str) -> GrowSample:
        for sample in self.samples:
            if sample.sample_id == sample_id:
                return sample
        raise KeyError(f"unknown sample {sample_id!r}")

    def assert_partition(self):
        ids = [s.sample_id for s in self.samples]
        combined = self.accepted + self.rejected + self.human_queue
        if sorted(combined) != sorted(ids):
            raise AssertionError("accepted/rejected/human_queue do not partition the batch")


@dataclass(frozen=True)
class IterationManifest:
    round: int
    policy_id: str
    thresholds: dict
    alpha: float
    dataset_refs: dict
    judge_prompt_version: str
    metrics: dict
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "policy_id": self.policy_id,
            "thresholds": self.thresholds,
            "alpha": self.alpha,
            "dataset_refs": self.dataset_refs,
            "judge_prompt_version": self.judge_prompt_version,
            "metrics": self.metrics,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationManifest":
        return cls(**data)


def read_manifest(path: str | Path) -> IterationManifest:
    with open(path, encoding="utf-8") as fh:
        return IterationManifest.from_dict(json.load(fh))


def sample_cache_key(record: GenerationRecord) -> str:
    digest = hashlib.sha256(
        (record.prompt_text + "\x00" + record.raw_output).encode("utf-8")
    ).hexdigest()
    return digest[:16]


def _write_jsonl(path: Path, rows: list[dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


class IterationLoop:
    """One run directory, many rounds; loop-level execution is serial."""

    def __init__(self, config: RunConfig, run_dir: str | Path):
        self.config = config
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.graph: FsmGraph = load_fsm_path(config.fsm_path)
        self.prompt_store = PromptStore.create(self.run_dir / "prompts")
        self._score_cache: dict[str, float] = {}

    # -- backend plumbing ------------------------------------------------------

    def _profile(self, role: str, round_index: int):
        base = dict(self.config.backends.get(role, {"role": role, "kind": "mock"}))
        base.setdefault("role", role)
        rounds = base.pop("rounds", None)
        options = dict(base.get("options", {}))
        if rounds:
            options.update(rounds[min(round_index, len(rounds) - 1)])
        base["options"] = options
        base.setdefault("seed", derive_seed(self.config.master_seed, "backend", role, round_index))
        if role == "policy":
            base.setdefault("identifier", self.config.policy_id_pattern.format(round=round_index))
        return profile_from_dict(base)

    def _gateways(self, round_index: int) -> tuple[LlmGateway, LlmGateway, LlmGateway]:
        policy = LlmGateway(self._profile("policy", round_index), graph=self.graph)
        evaluator = LlmGateway(self._profile("evaluator", round_index), graph=self.graph)
        judge = LlmGateway(self._profile("judge", round_index), graph=self.graph,
                           prompt_store=self.prompt_store)
        return policy, evaluator, judge

    def _round_dir(self, round_index: int) -> Path:
        path = self.run_dir / f"round-{round_index}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    # -- manifests -------------------------------------------------------------

    def initial_manifest(self) -> IterationManifest:
        refs: dict = {}
        if self.config.seed_corpus_n > 0:
            corpus = generate_corpus(self.graph, self.config.seed_corpus_n,
                                     self.config.master_seed)
            examples = []
            for index, dialogue in enumerate(corpus):
                examples.extend(to_training_examples(dialogue, self.graph,
                                                     dialogue_id=f"seed-{index}"))
            path = self._round_dir(0) / "seed_corpus.jsonl"
            write_examples_jsonl(examples, path)
            refs["seed_corpus"] = str(path.relative_to(self.run_dir))
        manifest = IterationManifest(
            round=0,
            policy_id=self.config.policy_id_pattern.format(round=0),
            thresholds={"t_hi": self.config.thresholds.t_hi, "t_lo": self.config.thresholds.t_lo},
            alpha=self.config.alpha,
            dataset_refs=refs,
            judge_prompt_version=self.prompt_store.latest(),
            metrics={},
            master_seed=self.config.master_seed,
        )
        self._write_manifest(manifest)
        return manifest

    def _write_manifest(self, manifest: IterationManifest):
        path = self._round_dir(manifest.round) / "manifest.json"
        path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    # -- grow -------------------------------------------------------------------

    def grow(self, manifest: IterationManifest, n: int | None = None) -> GrowBatch:
        """Run n sessions under the current policy; score and route every record."""
        n = n if n is not None else self.config.sessions_per_round
        if n < 1:
            raise ValueError("n must be >= 1")
        round_index = manifest.round
        policy, evaluator, judge = self._gateways(round_index)
        profile = OwnerProfile.from_dict(self.config.simulator)
        batch = GrowBatch(round=round_index, samples=[])
        transcript_rows: list[dict] = []
        try:
            for session_index in range(n):
                seed = derive_seed(self.config.master_seed, "session", round_index, session_index)
                rng = derive_rng(self.config.master_seed, "session", round_index, session_index)
                agent = make_user_agent(profile, self.graph, rng)
                turns, records, outcome = run_session(
                    self.graph, policy, agent, budget=self.config.turn_budget
                )
                transcript_rows.extend(
                    {**t.to_dict(), "session_index": session_index, "outcome": outcome}
                    for t in turns
                )
                for turn_index, record in enumerate(records):
                    asked = turns[turn_index]
                    gold = "accept" if (record.valid and record.parsed_label == asked.gold_label) \
                        else "reject"
                    previous_c = self._score_cache.get(sample_cache_key(record))
                    report = score_record(
                        record, evaluator, judge,
                        prompt_version=manifest.judge_prompt_version,
                        thresholds=self.config.thresholds,
                        alpha=self.config.alpha,
                        previous_c=previous_c,
                        score_jump_delta=self.config.score_jump_delta,
                        score_target_mode=self.config.score_target_mode,
                    )
                    sample = GrowSample(
                        sample_id=f"r{round_index}-s{session_index}-t{turn_index}",
                        record=record, report=report, gold=gold,
                        round=round_index, session_index=session_index,
                        turn_index=turn_index, seed=seed,
                    )
                    batch.samples.append(sample)
                    kind = report.routing.kind
                    if kind == "auto_accept":
                        batch.accepted.append(sample.sample_id)
                    elif kind == "auto_reject":
                        batch.rejected.append(sample.sample_id)
                    else:
                        batch.human_queue.append(sample.sample_id)
        except BackendUnavailable as exc:
            logger.warning("grow aborted at session boundary: %s", exc)
            batch.partial = True
        batch.assert_partition()
        self._persist_batch(batch, transcript_rows)
        return batch

    def _persist_batch(self, batch: GrowBatch, transcript_rows: list[dict]):
        round_dir = self._round_dir(batch.round)
        rows = [s.to_dict() for s in batch.samples]
        if batch.partial:
            rows = [{"partial": True}] + rows
        _write_jsonl(round_dir / "grow_raw.jsonl", rows)
        by_id = {s.sample_id: s for s in batch.samples}
        for name, ids in ((ACCEPTED, batch.accepted), (REJECTED, batch.rejected),
                          (HUMAN_QUEUE, batch.human_queue)):
            _write_jsonl(round_dir / f"{name}.jsonl", [by_id[i].to_dict() for i in ids])
        # transcripts carry wall-clock latency; diagnostic only, not replay-compared
        _write_jsonl(round_dir / "transcripts.jsonl", transcript_rows)

    # -- verdict ingestion -------------------------------------------------------

    def ingest_verdicts(self, batch: GrowBatch, verdicts: list[ReviewVerdict]) -> GrowBatch:
        """Apply human verdicts to queued samples; duplicates are last-write-wins."""
        for verdict in verdicts:
            sample = batch.by_id(verdict.item_id)  # KeyError on unknown id
            already = verdict.item_id in batch.resolutions
            if verdict.item_id not in batch.human_queue and not already:
                raise ValueError(f"sample {verdict.item_id} was not routed to human review")
            if verdict.kind == "correct" and verdict.new_label not in sample.record.options.labels:
                raise ValueError(
                    f"correction label {verdict.new_label!r} outside options "
                    f"{sample.record.options.labels}"
                )
            if already:
                batch.audit.append(
                    f"duplicate verdict for {verdict.item_id}: "
                    f"{batch.resolutions[verdict.item_id].kind} superseded by {verdict.kind}"
                )
            batch.resolutions[verdict.item_id] = verdict
        resolved = set(batch.resolutions)
        batch.human_queue = [i for i in batch.human_queue if i not in resolved]
        for item_id, verdict in sorted(batch.resolutions.items()):
            if verdict.kind in ("accept", "correct"):
                if item_id not in batch.accepted:
                    batch.accepted.append(item_id)
                if item_id in batch.rejected:
                    batch.rejected.remove(item_id)
            else:
                if item_id not in batch.rejected:
                    batch.rejected.append(item_id)
                if item_id in batch.accepted:
                    batch.accepted.remove(item_id)
        batch.assert_partition()
        return batch

    # -- improve -------------------------------------------------------------------

    def improve(self, manifest: IterationManifest, batch: GrowBatch,
                partial: bool = False) -> IterationManifest:
        """Emit the round's cleaned datasets and the next round's manifest."""
        if batch.human_queue and not (partial or batch.partial):
            raise RuntimeError(
                f"{len(batch.human_queue)} review items unresolved; pass partial=True to proceed"
            )
        round_dir = self._round_dir(batch.round)
        by_id = {s.sample_id: s for s in batch.samples}

        accepted_rows = []
        for sample_id in batch.accepted:
            sample = by_id[sample_id]
            verdict = batch.resolutions.get(sample_id)
            corrected = verdict is not None and verdict.kind == "correct"
            label = verdict.new_label if corrected else sample.record.parsed_label
            accepted_rows.append({
                "prompt": sample.record.prompt_text,
                "target_cot": sample.record.parsed_cot,
                "target_label": label,
                "meta": {"round": batch.round, "sample_id": sample_id, "corrected": corrected},
            })
        accepted_path = round_dir / "grow_accepted.jsonl"
        _write_jsonl(accepted_path, accepted_rows)

        pair_rng = derive_rng(self.config.master_seed, "evalpairs", batch.round)
        pair_rows = []
        skipped = 0
        for sample_id in batch.accepted:
            sample = by_id[sample_id]
            record = sample.record
            verdict = batch.resolutions.get(sample_id)
            if verdict is not None and verdict.kind == "correct":
                corrected_output = f"{record.parsed_cot} {verdict.new_label}".strip()
                record = replace(record, raw_output=corrected_output,
                                 parsed_label=verdict.new_label, valid=True)
            if not record.valid:
                skipped += 1
                continue
            pair = make_eval_pairs(record, pair_rng)
            if pair is None:
                skipped += 1
                continue
            positive, negative = pair
            pair_rows.append({**positive.to_dict(), "sample_id": sample_id})
            pair_rows.append({**negative.to_dict(), "sample_id": sample_id})
        if skipped:
            logger.info("round %d: %d accepted samples yielded no eval pair", batch.round, skipped)
        pairs_path = round_dir / "eval_pairs.jsonl"
        _write_jsonl(pairs_path, pair_rows)

        annotations: list[str] = []
        for _, verdict in sorted(batch.resolutions.items()):
            if verdict.annotation and verdict.annotation not in annotations:
                annotations.append(verdict.annotation)
        prompt_version = self.prompt_store.latest()
        if annotations:
            prompt_version = self.prompt_store.append_criteria(
                annotations, changelog=f"round {batch.round} annotator criteria"
            )

        self._score_cache = {sample_cache_key(s.record): s.report.c for s in batch.samples}

        refs = {
            "grow_raw": str((round_dir / "grow_raw.jsonl").relative_to(self.run_dir)),
            "grow_accepted": str(accepted_path.relative_to(self.run_dir)),
            "eval_pairs": str(pairs_path.relative_to(self.run_dir)),
            "human_queue": str((round_dir / "human_queue.jsonl").relative_to(self.run_dir)),
        }
        for ref in refs.values():
            if not (self.run_dir / ref).exists():
                raise RuntimeError(f"dataset ref {ref} missing on disk")
        next_manifest = IterationManifest(
            round=batch.round + 1,
            policy_id=self.config.policy_id_pattern.format(round=batch.round + 1),
            thresholds=manifest.thresholds,
            alpha=manifest.alpha,
            dataset_refs=refs,
            judge_prompt_version=prompt_version,
            metrics=self.iteration_metrics(batch),
            master_seed=self.config.master_seed,
        )
        self._write_manifest(next_manifest)
        return next_manifest

    # -- metrics ---------------------------------------------------------------------

    def iteration_metrics(self, batch: GrowBatch) -> dict:
        if not batch.samples:
            return {"human_judge_ratio": None, "evaluation_error_rate": None, "avg_score": None}
        queued = sum(
            1 for s in batch.samples if s.report.routing.kind == "human_review"
        )
        error_rate = evaluation_error_rate(
            [s.report.routing for s in batch.samples], [s.gold for s in batch.samples]
        )
        avg = math.fsum(s.report.c for s in batch.samples) / len(batch.samples)
        return {
            "human_judge_ratio": queued / len(batch.samples),
            "evaluation_error_rate": error_rate,
            "avg_score": avg,
        }

    # -- full run -------------------------------------------------------------------

    def run(self, rounds: int, partial: bool = False) -> list[IterationManifest]:
        """Execute `rounds` grow/ingest/improve cycles from a fresh manifest."""
        manifests = [self.initial_manifest()]
        for round_index in range(rounds):
            batch = self.grow(manifests[-1])
            verdict_path = None
            if round_index < len(self.config.verdict_files):
                verdict_path = self.config.verdict_files[round_index]
            if verdict_path:
                from .review import verdicts_from_file

                batch = self.ingest_verdicts(batch, verdicts_from_file(verdict_path))
            manifests.append(self.improve(manifests[-1], batch, partial=partial))
        return manifests


def review_items_from_batch(batch: GrowBatch) -> list[ReviewItem]:
    """Convert a batch's human queue into service review items."""
    by_id = {s.sample_id: s for s in batch.samples}
    return [
        ReviewItem(
            item_id=sample_id,
            record=by_id[sample_id].record,
            report=by_id[sample_id].report,
            reason=by_id[sample_id].report.routing.reason,
            round=batch.round,
        )
        for sample_id in batch.human_queue
    ]
