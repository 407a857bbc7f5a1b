"""Command-line entry point: fsm, augment, simulate, evaluate, run-loop, serve, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import augment as augment_mod
from .config import load_run_config
from .fsm import load_fsm_path, validate_document
from .gateway import LlmGateway, profile_from_dict
from .loop import IterationLoop
from .prompts import PromptStore
from .report import build_report, render_text
from .review import _record_from_dict
from .seeds import derive_rng
from .simulator import OwnerProfile, build_testset

USAGE = """usage: dialoop <command> [options]

commands:
  fsm validate <file>      check an FSM document, print diagnostics JSON
  augment                  synthesize a balanced training corpus
  augment report           histogram a written corpus
  simulate testset         build a labeled single-turn test set
  evaluate                 score a GenerationRecord JSONL with the ensemble
  run-loop                 run grow/improve rounds from a config file
  serve                    start the HTTP service
  report                   render a run directory report
"""


def _cmd_fsm(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop fsm validate")
    parser.add_argument("action", choices=["validate"])
    parser.add_argument("file")
    args = parser.parse_args(argv)
    try:
        with open(args.file, encoding="utf-8") as fh:
            document = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"valid": False,
                          "errors": [{"code": "unreadable", "message": str(exc),
                                      "location": args.file}]}))
        return 1
    diagnostics = validate_document(document)
    print(json.dumps({"valid": not diagnostics,
                      "errors": [d.to_dict() for d in diagnostics]}, indent=2))
    return 1 if diagnostics else 0


def _cmd_augment(argv: list[str]) -> int:
    if argv[:1] == ["report"]:
        parser = argparse.ArgumentParser(prog="dialoop augment report")
        parser.add_argument("--in", dest="infile", required=True)
        args = parser.parse_args(argv[1:])
        examples = augment_mod.read_examples_jsonl(args.infile)
        print(json.dumps(augment_mod.report_from_examples(examples).to_dict(), indent=2))
        return 0
    parser = argparse.ArgumentParser(prog="dialoop augment")
    parser.add_argument("--fsm", required=True)
    parser.add_argument("--n", type=int, default=augment_mod.DEFAULT_CORPUS_SIZE)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--template", default="v1")
    parser.add_argument("--max-length", type=int, default=16)
    args = parser.parse_args(argv)
    graph = load_fsm_path(args.fsm)
    corpus = augment_mod.generate_corpus(graph, args.n, args.seed, max_length=args.max_length)
    examples = []
    for index, dialogue in enumerate(corpus):
        examples.extend(
            augment_mod.to_training_examples(graph=graph, dialogue=dialogue,
                                             template_version=args.template,
                                             dialogue_id=f"d{index}")
        )
    augment_mod.write_examples_jsonl(examples, args.out)
    print(f"wrote {len(examples)} examples from {len(corpus)} dialogues to {args.out}")
    return 0


def _cmd_simulate(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop simulate testset")
    parser.add_argument("action", choices=["testset"])
    parser.add_argument("--fsm", required=True)
    parser.add_argument("--kind", choices=["effect", "general", "robust"], required=True)
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--profile", help="owner profile JSON")
    args = parser.parse_args(argv)
    graph = load_fsm_path(args.fsm)
    profile = None
    if args.profile:
        with open(args.profile, encoding="utf-8") as fh:
            profile = OwnerProfile.from_dict(json.load(fh))
    items = build_testset(graph, args.kind, args.n, derive_rng(args.seed, "testset"),
                          profile=profile)
    with open(args.out, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {len(items)} {args.kind} items to {args.out}")
    return 0


def _cmd_evaluate(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop evaluate")
    parser.add_argument("--records", required=True, help="GenerationRecord JSONL")
    parser.add_argument("--config", required=True, help="run config JSON")
    parser.add_argument("--out", required=True)
    parser.add_argument("--prompt-store", default=None)
    parser.add_argument("--prompt-version", default=None)
    args = parser.parse_args(argv)
    config = load_run_config(args.config)
    from .ensemble import score_record
    from .fsm import load_fsm_path as _load

    graph = _load(config.fsm_path)
    store_dir = Path(args.prompt_store) if args.prompt_store else Path(args.out).parent / "prompts"
    store = PromptStore.create(store_dir)
    version = args.prompt_version or store.latest()

    def _gateway(role):
        profile = dict(config.backends.get(role, {"role": role, "kind": "mock"}))
        profile.setdefault("role", role)
        profile.pop("rounds", None)
        return LlmGateway(profile_from_dict(profile), graph=graph,
                          prompt_store=store if role == "judge" else None)

    evaluator, judge = _gateway("evaluator"), _gateway("judge")
    written = 0
    with open(args.records, encoding="utf-8") as fin, open(args.out, "w", encoding="utf-8") as fout:
        for line in fin:
            if not line.strip():
                continue
            row = json.loads(line)
            record = _record_from_dict(row.get("record", row))
            report = score_record(record, evaluator, judge, prompt_version=version,
                                  thresholds=config.thresholds, alpha=config.alpha,
                                  score_target_mode=config.score_target_mode)
            out_row = {"report": report.to_dict()}
            if "sample_id" in row:
                out_row["sample_id"] = row["sample_id"]
            fout.write(json.dumps(out_row, sort_keys=True) + "\n")
            written += 1
    print(f"scored {written} records to {args.out}")
    return 0


def _cmd_run_loop(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop run-loop")
    parser.add_argument("--config", required=True)
    parser.add_argument("--rounds", type=int, required=True)
    parser.add_argument("--run-dir", required=True)
    parser.add_argument("--partial", action="store_true",
                        help="improve even with unresolved review items")
    args = parser.parse_args(argv)
    config = load_run_config(args.config)
    loop = IterationLoop(config, args.run_dir)
    manifests = loop.run(args.rounds, partial=args.partial)
    for manifest in manifests:
        metrics = manifest.metrics or {}
        print(f"round {manifest.round}: policy={manifest.policy_id} "
              f"prompt={manifest.judge_prompt_version} "
              f"human_judge_ratio={metrics.get('human_judge_ratio')}")
    return 0


def _cmd_serve(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop serve")
    parser.add_argument("--config", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8642)
    parser.add_argument("--seed-queue", type=int, default=0)
    args = parser.parse_args(argv)
    from .service import load_service_config, serve

    serve(load_service_config(args.config), host=args.host, port=args.port,
          seed_queue=args.seed_queue)
    return 0


def _cmd_report(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="dialoop report")
    parser.add_argument("--run-dir", required=True)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)
    report = build_report(args.run_dir)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(render_text(report))
    return 0


_COMMANDS = {
    "fsm": _cmd_fsm,
    "augment": _cmd_augment,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "run-loop": _cmd_run_loop,
    "serve": _cmd_serve,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 2
    command = _COMMANDS.get(argv[0])
    if command is None:
        print(USAGE, file=sys.stderr)
        print(f"unknown command {argv[0]!r}", file=sys.stderr)
        return 2
    return command(argv[1:])


if __name__ == "__main__":
    sys.exit(main())
