"""Run reports: per-round metrics table, corpus histograms, latency summary."""

from __future__ import annotations

import json
from pathlib import Path

from .augment import read_examples_jsonl, report_from_examples
from .loop import read_manifest
from .metrics import percentile


def _round_dirs(run_dir: Path) -> list[Path]:
    dirs = [p for p in run_dir.glob("round-*") if p.is_dir()]
    return sorted(dirs, key=lambda p: int(p.name.split("-")[1]))


def _count_lines(path: Path) -> int:
    with open(path, encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())


def build_report(run_dir: str | Path) -> dict:
    """Deterministic report bundle from a run directory; empty runs are valid."""
    run_dir = Path(run_dir)
    rounds = []
    latencies: list[float] = []
    overheads: list[float] = []
    augmentation = None
    for round_dir in _round_dirs(run_dir):
        manifest_path = round_dir / "manifest.json"
        entry: dict = {"round": int(round_dir.name.split("-")[1])}
        if manifest_path.exists():
            manifest = read_manifest(manifest_path)
            entry.update(
                policy_id=manifest.policy_id,
                judge_prompt_version=manifest.judge_prompt_version,
                metrics=manifest.metrics,
            )
        for name in ("grow_raw", "accepted", "rejected", "human_queue"):
            path = round_dir / f"{name}.jsonl"
            if path.exists():
                entry.setdefault("counts", {})[name] = _count_lines(path)
        transcripts = round_dir / "transcripts.jsonl"
        if transcripts.exists():
            with open(transcripts, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    if row.get("action_kind") == "open":
                        continue
                    latencies.append(row["latency_ms"])
                    overheads.append(row["overhead_ms"])
        corpus = round_dir / "seed_corpus.jsonl"
        if corpus.exists() and augmentation is None:
            augmentation = report_from_examples(read_examples_jsonl(corpus)).to_dict()
        rounds.append(entry)
    latency = None
    if latencies:
        latency = {
            "p50_ms": percentile(latencies, 50),
            "p99_ms": percentile(latencies, 99),
            "overhead_p50_ms": percentile(overheads, 50),
            "overhead_p99_ms": percentile(overheads, 99),
            "turns": len(latencies),
        }
    return {"run_dir": str(run_dir), "rounds": rounds, "latency": latency,
            "augmentation": augmentation}


def render_text(report: dict) -> str:
    lines = [f"run: {report['run_dir']}"]
    header = f"{'round':>5}  {'policy':<14} {'prompt':<7} {'human_ratio':>11} {'err_rate':>9} {'avg_c':>7}"
    lines.append(header)
    lines.append("-" * len(header))
    for entry in report["rounds"]:
        metrics = entry.get("metrics") or {}

        def _fmt(value, width):
            return f"{value:{width}.4f}" if isinstance(value, float) else f"{'-':>{width}}"

        lines.append(
            f"{entry['round']:>5}  {entry.get('policy_id', '-'):<14} "
            f"{entry.get('judge_prompt_version', '-'):<7} "
            f"{_fmt(metrics.get('human_judge_ratio'), 11)} "
            f"{_fmt(metrics.get('evaluation_error_rate'), 9)} "
            f"{_fmt(metrics.get('avg_score'), 7)}"
        )
    if report["latency"]:
        lat = report["latency"]
        lines.append(
            f"latency over {lat['turns']} turns: p50 {lat['p50_ms']:.2f} ms, "
            f"p99 {lat['p99_ms']:.2f} ms (overhead p99 {lat['overhead_p99_ms']:.2f} ms)"
        )
    if report["augmentation"]:
        aug = report["augmentation"]
        lines.append(
            f"augmented corpus: turn-count bins {aug['turn_counts']} "
            f"(max deviation {aug['turn_max_deviation']:.4f})"
        )
    return "\n".join(lines)
