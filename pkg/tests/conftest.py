from __future__ import annotations

import json
from pathlib import Path

import pytest

from dialoop.fsm import FsmGraph, load_fsm

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_DIR = REPO_ROOT / "demo"
DATA_DIR = Path(__file__).resolve().parent / "data"


def load_demo(name: str) -> dict:
    with open(DEMO_DIR / name, encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def cake_shop_document() -> dict:
    return load_demo("cake_shop_fsm.json")


@pytest.fixture(scope="session")
def cake_shop_graph(cake_shop_document) -> FsmGraph:
    return load_fsm(cake_shop_document)


@pytest.fixture(scope="session")
def poi_document() -> dict:
    return load_demo("poi_fsm.json")


@pytest.fixture(scope="session")
def poi_graph(poi_document) -> FsmGraph:
    return load_fsm(poi_document)
