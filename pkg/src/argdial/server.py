"""HTTP/JSON session service over the dialogue pipeline.

Every error response carries a stable machine-readable ``code`` plus a human
message. Sessions are serialized per id by the underlying store; model
snapshots are shared read-only across requests.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .dialogue import MoveError, SpeechActError, tree_payload
from .sessions import DialogueService, Session, SessionNotFoundError

MOVE_ERROR_STATUS = {
    "session_terminated": 409,
    "at_root": 409,
    "no_children": 409,
    "unknown_reference": 409,
}


class CreateSessionBody(BaseModel):
    topic: str | None = None


class UtteranceBody(BaseModel):
    text: str


def state_payload(service: DialogueService, session: Session) -> dict:
    graph = service.store.graph
    state = session.state
    return {
        "session_id": session.id,
        "topic": session.topic,
        "created_at": session.created_at,
        "current_id": state.current_id,
        "current_text": graph.nodes[state.current_id].text,
        "displayed": [
            {"id": nid, "text": graph.nodes[nid].text, "relation": graph.nodes[nid].relation}
            for nid in state.displayed
        ],
        "stance": state.strengths[graph.root_id],
        "rejected": sorted(state.rejected),
        "preferences": dict(state.preferences),
        "terminated": state.terminated,
    }


def create_app(service: DialogueService) -> FastAPI:
    app = FastAPI(title="argdial session service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(SessionNotFoundError)
    async def _not_found(_req: Request, exc: SessionNotFoundError):
        return JSONResponse(
            status_code=404,
            content={"code": "session_not_found", "message": f"unknown session {exc.args[0]!r}"},
        )

    @app.exception_handler(MoveError)
    async def _move_error(_req: Request, exc: MoveError):
        return JSONResponse(
            status_code=MOVE_ERROR_STATUS.get(exc.code, 409),
            content={"code": exc.code, "message": str(exc)},
        )

    @app.exception_handler(SpeechActError)
    async def _act_error(_req: Request, exc: SpeechActError):
        return JSONResponse(status_code=422, content={"code": "invalid_act", "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _validation(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422, content={"code": "invalid_request", "message": str(exc.errors())}
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "topic": service.store.topic}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody | None = None):
        requested = body.topic if body else None
        if requested and requested != service.store.topic:
            return JSONResponse(
                status_code=404,
                content={
                    "code": "unknown_topic",
                    "message": f"this service only hosts the topic {service.store.topic!r}",
                },
            )
        session, opening = service.create_session()
        return {
            "session_id": session.id,
            "response_text": opening,
            "state": state_payload(service, session),
        }

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": service.store.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return state_payload(service, service.store.get(session_id))

    @app.post("/sessions/{session_id}/utterance")
    def post_utterance(session_id: str, body: UtteranceBody):
        outcome = service.handle_utterance(session_id, body.text)
        session = service.store.get(session_id)
        return {
            "response_text": outcome.response_text,
            "intent": outcome.intent,
            "confidence": outcome.confidence,
            "resolved_argument": outcome.resolved_argument,
            "stance": outcome.stance,
            "clarification": outcome.clarification,
            "state": state_payload(service, session),
            "debug": {
                "distribution": outcome.distribution,
                "similarity_scores": outcome.similarity_scores,
            },
        }

    @app.get("/sessions/{session_id}/tree")
    def get_tree(session_id: str):
        session = service.store.get(session_id)
        return tree_payload(service.store.graph, session.state)

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        session = service.store.get(session_id)
        return {"session_id": session.id, "events": [asdict(e) for e in session.events]}

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        service.store.delete(session_id)
        return Response(status_code=204)

    return app
