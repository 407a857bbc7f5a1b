from __future__ import annotations

import json

import pytest

from dialoop.review import (
    ConflictError,
    ReviewStore,
    ReviewVerdict,
    seed_demo_queue,
    verdicts_from_file,
)


def test_store_replay_roundtrip(tmp_path, cake_shop_graph):
    store = ReviewStore(tmp_path / "rv")
    items = seed_demo_queue(store, cake_shop_graph, 6, seed=1)
    store.commit_verdict(ReviewVerdict(item_id=items[0].item_id, kind="accept"))
    with pytest.raises(ConflictError):
        store.commit_verdict(ReviewVerdict(item_id=items[0].item_id, kind="reject"))
    replayed = ReviewStore(tmp_path / "rv")
    assert len(replayed.items()) == 6
    assert replayed.get(items[0].item_id).status == "resolved"
    assert len(replayed.items(status="pending")) == 5
    with pytest.raises(ValueError):
        replayed.enqueue([items[1]])  # duplicate id


def test_store_snapshot_written(tmp_path, cake_shop_graph):
    store = ReviewStore(tmp_path / "rv")
    items = seed_demo_queue(store, cake_shop_graph, 3, seed=2)
    store.write_snapshot()
    snapshot = json.loads((tmp_path / "rv" / "snapshot.json").read_text())
    assert len(snapshot["items"]) == 3
    store.commit_verdict(ReviewVerdict(item_id=items[1].item_id, kind="reject"))
    store.write_snapshot()
    snapshot = json.loads((tmp_path / "rv" / "snapshot.json").read_text())
    by_id = {row["item_id"]: row for row in snapshot["items"]}
    assert by_id[items[1].item_id]["status"] == "resolved"


def test_correct_verdict_requires_label_in_options(tmp_path, cake_shop_graph):
    store = ReviewStore(tmp_path / "rv")
    items = seed_demo_queue(store, cake_shop_graph, 1, seed=3)
    with pytest.raises(ValueError):
        store.commit_verdict(ReviewVerdict(item_id=items[0].item_id, kind="correct",
                                           new_label="Z"))
    with pytest.raises(ValueError):
        ReviewVerdict(item_id="x", kind="correct")  # correct needs a label
    with pytest.raises(ValueError):
        ReviewVerdict(item_id="x", kind="maybe")


def test_verdict_file_roundtrip(tmp_path):
    path = tmp_path / "verdicts.jsonl"
    verdict = ReviewVerdict(item_id="a", kind="correct", new_label="B",
                            annotator="ann", annotation="note", timestamp=5.0)
    path.write_text(json.dumps(verdict.to_dict()) + "\n")
    assert verdicts_from_file(path) == [verdict]
