from __future__ import annotations

import json

import pytest

from dialoop.cli import main
from dialoop.fsm import candidate_options
from dialoop.manager import GenerationRecord

from conftest import DEMO_DIR


def test_fsm_validate_ok(capsys):
    assert main(["fsm", "validate", str(DEMO_DIR / "cake_shop_fsm.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"valid": True, "errors": []}


def test_fsm_validate_reports_diagnostics(tmp_path, capsys):
    doc = {
        "states": [{"id": "a", "query": "q"}],
        "initial": "a",
        "terminals": [],
        "transitions": [{"source": "a", "target": "zz", "reply_class": "r",
                         "reply_variants": ["x"]}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["fsm", "validate", str(path)]) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["valid"] is False
    assert any(e["code"] == "unknown-state" and "zz" in e["message"] for e in out["errors"])
    assert all({"code", "message", "location"} <= set(e) for e in out["errors"])


def test_fsm_validate_unreadable(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{nope")
    assert main(["fsm", "validate", str(path)]) == 1


def test_augment_and_report_roundtrip(tmp_path, capsys):
    out_path = tmp_path / "corpus.jsonl"
    code = main(["augment", "--fsm", str(DEMO_DIR / "cake_shop_fsm.json"),
                 "--n", "40", "--seed", "5", "--out", str(out_path)])
    assert code == 0
    lines = [json.loads(l) for l in out_path.read_text().splitlines()]
    assert lines and {"prompt", "target_cot", "target_label", "meta"} <= set(lines[0])
    assert {"seed", "path", "template_version"} <= set(lines[0]["meta"])
    capsys.readouterr()
    assert main(["augment", "report", "--in", str(out_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report["turn_counts"]) <= {"1", "2", "3"}
    assert report["reply_max_deviation"] >= 0.0


def test_augment_determinism(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        main(["augment", "--fsm", str(DEMO_DIR / "cake_shop_fsm.json"),
              "--n", "25", "--seed", "9", "--out", str(out)])
    assert a.read_bytes() == b.read_bytes()


def test_simulate_testset(tmp_path, capsys):
    out_path = tmp_path / "robust.jsonl"
    code = main(["simulate", "testset", "--fsm", str(DEMO_DIR / "poi_fsm.json"),
                 "--kind", "robust", "--n", "50", "--seed", "3",
                 "--out", str(out_path), "--profile", str(DEMO_DIR / "owner_profile.json")])
    assert code == 0
    items = [json.loads(l) for l in out_path.read_text().splitlines()]
    assert len(items) == 50
    assert all({"utterance", "state", "gold_label", "provenance"} <= set(i) for i in items)


def test_evaluate_records(tmp_path, capsys, cake_shop_graph):
    options = candidate_options(cake_shop_graph, "s0")
    record = GenerationRecord(
        prompt_text="P", raw_output="Sure thing. A", parsed_cot="Sure thing.",
        parsed_label="A", valid=True, state="s0", options=options,
    )
    records_path = tmp_path / "records.jsonl"
    records_path.write_text(json.dumps({"record": record.to_dict(), "sample_id": "x1"}) + "\n")
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({
        "fsm_path": str(DEMO_DIR / "cake_shop_fsm.json"),
        "backends": {
            "evaluator": {"role": "evaluator", "kind": "mock",
                          "options": {"probs": [0.95], "logits": [0.0, 6.0]}},
            "judge": {"role": "judge", "kind": "mock",
                      "options": {"behavior": "judge", "always": "correct"}},
        },
    }))
    out_path = tmp_path / "reports.jsonl"
    code = main(["evaluate", "--records", str(records_path), "--config", str(config_path),
                 "--out", str(out_path)])
    assert code == 0
    row = json.loads(out_path.read_text().splitlines()[0])
    assert row["sample_id"] == "x1"
    assert row["report"]["routing"]["kind"] == "auto_accept"


def test_run_loop_cli(tmp_path, capsys):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({
        "fsm_path": str(DEMO_DIR / "cake_shop_fsm.json"),
        "master_seed": 3,
        "sessions_per_round": 5,
        "backends": {
            "policy": {"role": "policy", "kind": "mock", "options": {"behavior": "oracle"}},
            "evaluator": {"role": "evaluator", "kind": "mock",
                          "options": {"correct_range": [0.95, 0.99], "margin": 6.0}},
            "judge": {"role": "judge", "kind": "mock", "options": {"behavior": "judge"}},
        },
    }))
    run_dir = tmp_path / "run"
    code = main(["run-loop", "--config", str(config_path), "--rounds", "2",
                 "--run-dir", str(run_dir), "--partial"])
    assert code == 0
    assert (run_dir / "round-2" / "manifest.json").exists()
    out = capsys.readouterr().out
    assert "round 0" in out and "round 2" in out
    capsys.readouterr()
    assert main(["report", "--run-dir", str(run_dir)]) == 0
    rendered = capsys.readouterr().out
    assert "policy-r1" in rendered
    assert main(["report", "--run-dir", str(run_dir), "--json"]) == 0


def test_report_empty_run(tmp_path, capsys):
    assert main(["report", "--run-dir", str(tmp_path)]) == 0
    assert "run:" in capsys.readouterr().out


def test_unknown_command(capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert main(["--help"]) == 0
