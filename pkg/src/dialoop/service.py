"""HTTP service: live sessions, the human-review queue, and run metrics.

Verdict commits are serialized per item with first-committed-wins; the loser
of a concurrent double-submit receives 409. All error bodies are machine
readable: {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .fsm import load_fsm_path
from .gateway import LlmGateway, profile_from_dict
from .manager import (
    ABANDONED,
    SessionState,
    TurnBudgetExhausted,
    start_session,
    step,
)
from .metrics import latency_summary, snapshot
from .review import ConflictError, ReviewStore, ReviewVerdict, seed_demo_queue


@dataclass(frozen=True)
class ServiceConfig:
    fsm_path: Path
    policy: dict = field(default_factory=dict)
    review_dir: Path = Path("review")
    turn_budget: int = 12
    static_dir: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ServiceConfig":
        base = base_dir or Path.cwd()

        def _resolve(p):
            return (base / p).resolve() if p and not Path(p).is_absolute() else Path(p)

        return cls(
            fsm_path=_resolve(data["fsm_path"]),
            policy=data.get("policy", {"role": "policy", "kind": "mock",
                                       "options": {"behavior": "oracle"}}),
            review_dir=_resolve(data.get("review_dir", "review")),
            turn_budget=data.get("turn_budget", 12),
            static_dir=_resolve(data["static_dir"]) if data.get("static_dir") else None,
        )


def load_service_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return ServiceConfig.from_dict(json.load(fh), base_dir=path.parent)


class StartRequest(BaseModel):
    budget: int | None = None


class StepRequest(BaseModel):
    session_id: str
    user_reply: str


class VerdictRequest(BaseModel):
    item_id: str
    kind: str
    new_label: str | None = None
    annotator: str = "anonymous"
    annotation: str | None = None


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def create_app(config: ServiceConfig, seed_queue: int = 0) -> FastAPI:
    graph = load_fsm_path(config.fsm_path)
    policy_profile = dict(config.policy)
    policy_profile.setdefault("role", "policy")
    policy = LlmGateway(profile_from_dict(policy_profile), graph=graph)
    store = ReviewStore(config.review_dir)
    if seed_queue and not store.items():
        seed_demo_queue(store, graph, seed_queue)

    sessions: dict[str, SessionState] = {}
    sessions_lock = threading.Lock()
    counter = {"next": 0}

    app = FastAPI(title="dialoop service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.store = store
    app.state.graph = graph

    @app.exception_handler(HTTPException)
    async def _http_error(request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error",
                                                                  "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    @app.post("/session/start")
    def session_start(body: StartRequest):
        with sessions_lock:
            session_id = f"sess-{counter['next']}"
            counter["next"] += 1
            session = start_session(graph, budget=body.budget or config.turn_budget)
            sessions[session_id] = session
        return {
            "session_id": session_id,
            "state": session.current_state,
            "agent_query": session.history[-1].agent_query,
            "outcome": session.outcome,
        }

    @app.post("/session/step")
    def session_step(body: StepRequest):
        session = sessions.get(body.session_id)
        if session is None:
            raise _error(404, "unknown_session", f"no session {body.session_id!r}")
        if session.outcome is not None:
            raise _error(409, "session_finished", f"session is {session.outcome}")
        try:
            action, _, record = step(session, policy, body.user_reply)
        except TurnBudgetExhausted:
            return {
                "session_id": body.session_id,
                "outcome": ABANDONED,
                "action_kind": None,
                "agent_query": None,
                "state": session.current_state,
            }
        return {
            "session_id": body.session_id,
            "action_kind": action.kind,
            "agent_query": action.query,
            "state": session.current_state,
            "retry_count": session.retry_count,
            "valid_output": record.valid,
            "outcome": session.outcome,
        }

    @app.get("/review/queue")
    def review_queue(
        status: str = Query(default="pending"),
        reason: str | None = None,
        round: int | None = None,
        page: int = Query(default=1, ge=1),
        page_size: int = Query(default=20, ge=1, le=200),
    ):
        status_filter = None if status == "all" else status
        items = store.items(status=status_filter, reason=reason, round_index=round)
        start = (page - 1) * page_size
        return {
            "items": [i.summary() for i in items[start:start + page_size]],
            "total": len(items),
            "page": page,
            "page_size": page_size,
            "counts_by_reason": store.counts_by_reason(status=status_filter),
        }

    @app.get("/review/item/{item_id}")
    def review_item(item_id: str):
        try:
            return store.get(item_id).to_dict()
        except KeyError:
            raise _error(404, "unknown_item", f"no review item {item_id!r}")

    @app.post("/review/verdict")
    def review_verdict(body: VerdictRequest):
        try:
            verdict = ReviewVerdict(
                item_id=body.item_id, kind=body.kind, new_label=body.new_label,
                annotator=body.annotator, annotation=body.annotation,
            )
        except ValueError as exc:
            raise _error(422, "invalid_verdict", str(exc))
        try:
            item = store.commit_verdict(verdict)
        except KeyError:
            raise _error(404, "unknown_item", f"no review item {body.item_id!r}")
        except ConflictError as exc:
            raise _error(409, "conflict", str(exc))
        except ValueError as exc:
            raise _error(422, "invalid_label", str(exc))
        return {"item": item.summary()}

    @app.get("/metrics")
    def metrics():
        with sessions_lock:
            transcripts = [s.history for s in sessions.values()]
        pending = len(store.items(status="pending"))
        resolved = len(store.items(status="resolved"))
        snap = snapshot(transcripts=transcripts, graph=graph)
        turns = [t for s in transcripts for t in s]
        return {
            **snap.to_dict(),
            "latency": latency_summary(turns),
            "review": {"pending": pending, "resolved": resolved,
                       "counts_by_reason": store.counts_by_reason()},
            "sessions": {
                "active": sum(1 for s in sessions.values() if s.outcome is None),
                "completed": sum(1 for s in sessions.values() if s.outcome == "completed"),
                "abandoned": sum(1 for s in sessions.values() if s.outcome == "abandoned"),
            },
        }

    if config.static_dir and Path(config.static_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(config.static_dir), html=True), name="ui")

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8642,
          seed_queue: int = 0):
    import uvicorn

    uvicorn.run(create_app(config, seed_queue=seed_queue), host=host, port=port,
                log_level="warning")
