"""HTTP control plane for a running engagement.

Read endpoints serve redacted snapshots of engine state; the two mutating
endpoints (ticket decisions, stop requests) hand commands to the engine's
own serialized structures and never touch its internals. Every endpoint
requires the configured bearer token; without a configured token the
service is open, which is only sane for local replays.

Credential findings are masked on every payload this service emits. The
one exception is an explicit `reveal=1` on GET /findings, the API
counterpart of the CLI's --reveal flag.
"""

from __future__ import annotations

import asyncio
import hmac
import json

import uvicorn
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .approval import APPROVED, APPROVED_WITH_EDIT, DENIED, PENDING, ApprovalTicket
from .errors import (
    AlreadyDecided,
    MissingDenyReason,
    MissingEditedCommand,
    UnknownSession,
    UnknownTicket,
)
from .events import Event
from .orchestrator import RUNNING, Engagement, redact_structure, redact_text
from .ptt import PttNode, serialize_ptt

TICKET_STATES = (PENDING, APPROVED, DENIED, APPROVED_WITH_EDIT)
STREAM_POLL_SECONDS = 0.05


class DecisionRequest(BaseModel):
    decision: str
    reason: str | None = None
    edited_command: str | None = None
    operator: str = "operator"


def _node_view(node: PttNode) -> dict:
    return {
        "id": node.id,
        "title": node.title,
        "status": node.status.value,
        "result": list(node.result.lines) if node.result else None,
        "children": [_node_view(child) for child in node.children],
    }


def _ticket_view(ticket: ApprovalTicket, secrets: list[str]) -> dict:
    view = {
        "ticket_id": ticket.ticket_id,
        "state": ticket.state,
        "session": ticket.step.session,
        "command_line": ticket.step.command_line,
        "purpose": ticket.step.purpose,
        "explanation": ticket.explanation,
        "risk_flags": list(ticket.risk_flags),
        "decided_by": ticket.decided_by,
        "decided_at": ticket.decided_at,
        "reason": ticket.reason,
        "edited_command": ticket.edited_command,
    }
    return redact_structure(view, secrets)


def create_app(engine: Engagement, token: str | None = None) -> FastAPI:
    """Build the API around one engagement handle."""
    if token is None:
        token = engine.config.api_token
    app = FastAPI(title="pentagent control plane", docs_url=None, redoc_url=None)

    def require_token(request: Request) -> None:
        if token is None:
            return
        supplied = None
        header = request.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            supplied = header[7:].strip()
        if supplied is None:
            supplied = request.query_params.get("token")
        if supplied is None or not hmac.compare_digest(supplied, token):
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def secrets() -> list[str]:
        return engine.display_secrets()

    @app.get("/engagement")
    def engagement_view(request: Request) -> dict:
        require_token(request)
        state = engine.state()
        return {
            "status": state.status,
            "cycle": state.cycle,
            "mode": state.mode,
            "scope": state.scope,
            "used_tokens": state.used_tokens,
            "budgets": {
                "max_cycles": state.max_cycles,
                "max_tokens": state.max_tokens,
            },
            "last_seq": engine.log.last_seq,
        }

    @app.get("/ptt")
    def ptt_view(request: Request) -> dict:
        require_token(request)
        tree = engine.state().ptt
        return {
            "revision": tree.revision,
            "text": redact_text(serialize_ptt(tree), secrets()),
            "phases": redact_structure(
                [_node_view(phase) for phase in tree.phases], secrets()
            ),
        }

    @app.get("/tickets")
    def tickets_view(request: Request, state: str | None = None) -> list[dict]:
        require_token(request)
        if state is not None and state not in TICKET_STATES:
            raise HTTPException(status_code=400, detail=f"unknown state {state!r}")
        hidden = secrets()
        tickets = engine.tickets.all_tickets()
        if state is not None:
            tickets = [t for t in tickets if t.state == state]
        return [_ticket_view(t, hidden) for t in tickets]

    @app.post("/tickets/{ticket_id}/decision")
    def decide_ticket(
        ticket_id: int, body: DecisionRequest, request: Request
    ) -> dict:
        require_token(request)
        try:
            ticket = engine.tickets.decide(
                ticket_id,
                body.decision,
                operator=body.operator,
                reason=body.reason,
                edited_command=body.edited_command,
            )
        except UnknownTicket as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except AlreadyDecided as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (MissingDenyReason, MissingEditedCommand, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return _ticket_view(ticket, secrets())

    @app.get("/findings")
    def findings_view(request: Request, reveal: int = 0) -> list[dict]:
        require_token(request)
        hidden = [] if reveal else secrets()
        return [
            {
                "kind": f.kind,
                "value": redact_text(f.value, hidden),
                "context": redact_text(f.context, hidden),
                "source_ref": f.source_ref,
            }
            for f in engine.state().findings
        ]

    @app.get("/sessions")
    def sessions_view(request: Request) -> dict:
        require_token(request)
        return {"sessions": engine.session_names()}

    @app.get("/sessions/{name}/output")
    def session_output(request: Request, name: str, since: int = 0) -> dict:
        require_token(request)
        try:
            delta, cursor = engine.poll_session(name, since)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"output": redact_text(delta, secrets()), "cursor": cursor}

    @app.post("/engagement/stop")
    def stop_engagement(request: Request) -> dict:
        require_token(request)
        engine.request_stop()
        return {"status": engine.status, "stopping": True}

    def _frame(event: Event) -> str:
        body = json.dumps(
            {
                "seq": event.seq,
                "kind": event.kind,
                "payload": redact_structure(event.payload, secrets()),
            },
            ensure_ascii=False,
        )
        return f"id: {event.seq}\ndata: {body}\n\n"

    @app.get("/events")
    async def event_stream(
        request: Request, cursor: int = 0, follow: int = 1
    ) -> StreamingResponse:
        require_token(request)

        async def stream():
            seen = cursor
            while True:
                batch = engine.log.events_since(seen)
                for event in batch:
                    seen = event.seq
                    yield _frame(event)
                if batch:
                    continue
                # drained; a finished engine will emit nothing further
                if not follow or engine.status != RUNNING:
                    return
                if await request.is_disconnected():
                    return
                await asyncio.sleep(STREAM_POLL_SECONDS)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(engine: Engagement, host: str, port: int) -> None:
    """Run the API on a real socket; blocks until shut down."""
    uvicorn.run(create_app(engine), host=host, port=port, log_level="warning")
