"""HTTP/JSON surface over :class:`ModerationSystem`.

Moderator identity is a plain ``X-Moderator`` header mapped to a registered
profile; every hidden or flagged item in a response carries a machine code
plus human-readable text so clients never have to guess why something is
missing.
"""

from __future__ import annotations

import io
import json

from fastapi import FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import __version__
from ..errors import (
    AuditChainBroken,
    BadThreshold,
    DuplicateTaskForThing,
    InvalidDecision,
    LeaseViolation,
    MalformedField,
    MissingId,
    EmptyDocument,
    NotFound,
    PipelineError,
    QueueEmpty,
    StaleTask,
    UnknownCategory,
    UnknownGroup,
    UnknownModerator,
)
from ..moderation import ReviewDecision
from .system import DEFAULT_GROUP, ModerationSystem

_STATUS_BY_ERROR = (
    (UnknownModerator, 401),
    (NotFound, 404),
    (QueueEmpty, 404),
    (UnknownGroup, 404),
    (DuplicateTaskForThing, 409),
    (LeaseViolation, 409),
    (StaleTask, 409),
    (InvalidDecision, 422),
    (BadThreshold, 422),
    (UnknownCategory, 422),
    (MissingId, 422),
    (EmptyDocument, 422),
    (MalformedField, 422),
    (AuditChainBroken, 500),
)


def _status_for(exc: PipelineError) -> int:
    for cls, status in _STATUS_BY_ERROR:
        if isinstance(exc, cls):
            return status
    return 400


def create_app(system: ModerationSystem) -> FastAPI:
    app = FastAPI(title="printmod", version=__version__)

    @app.exception_handler(PipelineError)
    async def pipeline_error(_request: Request, exc: PipelineError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": exc.code, "detail": str(exc)},
        )

    def _require_moderator(moderator_id: str | None) -> str:
        if not moderator_id:
            raise UnknownModerator("missing X-Moderator header")
        system.queue.moderator(moderator_id)
        return moderator_id

    @app.get("/")
    async def root() -> dict:
        return {
            "service": "printmod",
            "version": __version__,
            "model_version": system.model.version,
            "things": len(system.store),
            "audit_events": len(system.audit),
        }

    @app.post("/things", status_code=201)
    async def ingest_thing(raw: dict) -> dict:
        return system.ingest(raw)

    @app.get("/things/{thing_id}/explanation")
    async def thing_explanation(thing_id: str, x_moderator: str | None = Header(default=None)) -> dict:
        return system.explanation(thing_id, requester_is_moderator=system.is_moderator(x_moderator))

    @app.get("/moderation/next")
    async def moderation_next(x_moderator: str | None = Header(default=None)) -> dict:
        moderator_id = _require_moderator(x_moderator)
        task = system.next_task(moderator_id)
        record = task.to_record()
        record["lease"] = {"moderator_id": task.lease[0], "expiry": task.lease[1].isoformat()}
        return record

    @app.post("/moderation/{task_id}/review")
    async def moderation_review(task_id: str, body: dict, x_moderator: str | None = Header(default=None)) -> dict:
        moderator_id = _require_moderator(x_moderator)
        record = dict(body)
        record["task_id"] = task_id
        record.setdefault("moderator_id", moderator_id)
        if record["moderator_id"] != moderator_id:
            raise InvalidDecision("decision moderator_id does not match X-Moderator header")
        return system.submit_review(ReviewDecision.from_record(record))

    @app.get("/search")
    async def search(
        q: str = "",
        threshold: float | None = None,
        group: str = DEFAULT_GROUP,
        page: int = 1,
        page_size: int = 20,
        x_moderator: str | None = Header(default=None),
    ) -> dict:
        return system.search(
            terms=q,
            audience_group=group,
            threshold_override=threshold,
            page=page,
            page_size=page_size,
            requester_is_moderator=system.is_moderator(x_moderator),
        )

    @app.get("/thresholds")
    async def thresholds() -> dict:
        return {"profiles": system.threshold_snapshot()}

    @app.get("/examples")
    async def examples(threshold: float = 0.5, n: int = 5, seed: int = 0) -> dict:
        return system.threshold_examples(threshold, n=n, rng_seed=seed)

    @app.get("/audit/export")
    async def audit_export() -> PlainTextResponse:
        lines = io.StringIO()
        for event in system.audit.events():
            lines.write(json.dumps(event.to_record(), sort_keys=True) + "\n")
        return PlainTextResponse(lines.getvalue(), media_type="application/x-ndjson")

    @app.get("/assets/{asset_id}.png")
    async def asset_png(asset_id: str) -> Response:
        from PIL import Image

        asset = system.store.asset(asset_id)
        buf = io.BytesIO()
        Image.fromarray(asset.pixels, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    return app
