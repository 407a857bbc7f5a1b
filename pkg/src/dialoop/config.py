"""Run configuration: one JSON file binding FSM, backends, thresholds, seeds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import DEFAULT_ALPHA, DEFAULT_SCORE_JUMP_DELTA, Thresholds


@dataclass(frozen=True)
class RunConfig:
    fsm_path: Path
    backends: dict = field(default_factory=dict)  # role -> profile dict (+ optional "rounds")
    thresholds: Thresholds = Thresholds()
    alpha: float = DEFAULT_ALPHA
    master_seed: int = 0
    sessions_per_round: int = 50
    turn_budget: int = 12
    simulator: dict = field(default_factory=dict)
    policy_id_pattern: str = "policy-r{round}"
    score_target_mode: str = "full"
    score_jump_delta: float = DEFAULT_SCORE_JUMP_DELTA
    seed_corpus_n: int = 0
    verdict_files: tuple = ()  # optional per-round verdict JSONL paths

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        base = base_dir or Path.cwd()

        def _resolve(p):
            return (base / p).resolve() if p and not Path(p).is_absolute() else Path(p)

        backends = {role: dict(profile) for role, profile in data.get("backends", {}).items()}
        for profile in backends.values():
            options = profile.get("options", {})
            if options.get("script_file"):
                options = dict(options)
                options["script_file"] = str(_resolve(options["script_file"]))
                profile["options"] = options

        thresholds = data.get("thresholds", {})
        return cls(
            fsm_path=_resolve(data["fsm_path"]),
            backends=backends,
            thresholds=Thresholds(
                t_hi=thresholds.get("t_hi", 0.9), t_lo=thresholds.get("t_lo", 0.3)
            ),
            alpha=data.get("alpha", DEFAULT_ALPHA),
            master_seed=data.get("master_seed", 0),
            sessions_per_round=data.get("sessions_per_round", 50),
            turn_budget=data.get("turn_budget", 12),
            simulator=data.get("simulator", {}),
            policy_id_pattern=data.get("policy_id_pattern", "policy-r{round}"),
            score_target_mode=data.get("score_target_mode", "full"),
            score_jump_delta=data.get("score_jump_delta", DEFAULT_SCORE_JUMP_DELTA),
            seed_corpus_n=data.get("seed_corpus_n", 0),
            verdict_files=tuple(
                _resolve(v) if v else None for v in data.get("verdict_files", [])
            ),
        )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return RunConfig.from_dict(json.load(fh), base_dir=path.parent)
