"""End-to-end wiring: grow -> review service -> verdicts -> ingest -> improve."""

from __future__ import annotations

import random

from fastapi.testclient import TestClient

from dialoop.gateway import BackendProfile, LlmGateway
from dialoop.loop import IterationLoop, review_items_from_batch
from dialoop.manager import run_session
from dialoop.metrics import attribute_breakdown
from dialoop.review import ReviewStore
from dialoop.service import ServiceConfig, create_app
from dialoop.simulator import OwnerProfile, make_user_agent

from conftest import DEMO_DIR
from test_loop import loop_config


def test_grow_queue_served_and_ingested(tmp_path):
    config = loop_config(sessions_per_round=15)
    loop = IterationLoop(config, tmp_path / "run")
    manifest = loop.initial_manifest()
    batch = loop.grow(manifest)
    assert batch.human_queue

    store = ReviewStore(tmp_path / "review")
    items = review_items_from_batch(batch)
    store.enqueue(items)
    # the queue is exactly the human_review partition: nothing lost, nothing doubled
    assert [i.item_id for i in store.items(status="pending")] == batch.human_queue

    service_config = ServiceConfig(
        fsm_path=DEMO_DIR / "cake_shop_fsm.json",
        policy={"role": "policy", "kind": "mock", "options": {"behavior": "oracle"}},
        review_dir=tmp_path / "review",
    )
    app = create_app(service_config)
    with TestClient(app) as client:
        listing = client.get("/review/queue", params={"page_size": 200}).json()
        assert listing["total"] == len(batch.human_queue)
        for item in listing["items"]:
            response = client.post("/review/verdict", json={
                "item_id": item["item_id"], "kind": "accept", "annotator": "ann-http",
            })
            assert response.status_code == 200

    # verdicts committed over HTTP are what the loop ingests
    replayed = ReviewStore(tmp_path / "review")
    batch = loop.ingest_verdicts(batch, replayed.verdicts())
    assert batch.human_queue == []
    manifest2 = loop.improve(manifest, batch)
    assert manifest2.round == 1


def test_attribute_breakdown_counts(cake_shop_graph):
    policy = LlmGateway(BackendProfile(role="policy", kind="mock", identifier="o",
                                       options={"behavior": "oracle"}), graph=cake_shop_graph)
    agent = make_user_agent(OwnerProfile(), cake_shop_graph, random.Random(44))
    transcripts = [run_session(cake_shop_graph, policy, agent)[0] for _ in range(50)]
    table = attribute_breakdown(transcripts, cake_shop_graph)
    assert table["name"]["prompts"] == 50  # every session asks the name question
    assert table["name"]["successes"] == 50  # oracle policy is always right
    assert set(table) <= {"name", "business-status", "brand"}
    assert table["business-status"]["prompts"] <= 50
