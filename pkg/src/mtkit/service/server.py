"""HTTP front of the annotation campaign.

Endpoints: GET /session/{annotator}, POST /rating, GET /guidelines,
GET /progress/{annotator}, plus the static UI bundle under /ui when a
build directory is supplied. Every client-bound body is checked against
the configured system names before it leaves the process; blinding is
enforced here as well as tested from outside.
"""

import json
import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotation import RatingStore, ScoreRangeError, UnknownTaskError
from .rubric import guidelines_payload

log = logging.getLogger(__name__)


class RatingIn(BaseModel):
    task_id: str
    score: int


class BlindingViolation(AssertionError):
    """A client-bound payload contained a configured system name."""


def _blind_guard(store: RatingStore, payload: dict) -> dict:
    names = store.system_names()
    if names:
        body = json.dumps(payload, ensure_ascii=False)
        for name in names:
            if name in body:
                raise BlindingViolation(f"payload leaks system name {name!r}")
    return payload


def create_app(store: RatingStore, token: str | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="annotation campaign", docs_url=None, redoc_url=None)

    def check_token(request: Request) -> None:
        if token is None:
            return
        supplied = request.headers.get("x-annotator-token") or \
            request.query_params.get("token")
        if supplied != token:
            raise HTTPException(status_code=401, detail="missing or wrong token")

    @app.get("/session/{annotator_id}")
    def get_session(annotator_id: str, request: Request) -> JSONResponse:
        check_token(request)
        tasks = store.tasks_for(annotator_id)
        if not tasks:
            raise HTTPException(status_code=404,
                                detail=f"no session for annotator {annotator_id}")
        payload = {
            "annotator_id": annotator_id,
            "tasks": [t.client_view() for t in tasks],
        }
        return JSONResponse(_blind_guard(store, payload))

    @app.post("/rating")
    def post_rating(rating: RatingIn, request: Request) -> JSONResponse:
        check_token(request)
        try:
            stored = store.submit_rating(rating.task_id, rating.score)
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ScoreRangeError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        payload = {"task_id": stored.task_id, "score": stored.score,
                   "status": "rated", "submitted_at": stored.submitted_at}
        return JSONResponse(_blind_guard(store, payload))

    @app.get("/guidelines")
    def get_guidelines() -> JSONResponse:
        return JSONResponse(guidelines_payload())

    @app.get("/progress/{annotator_id}")
    def get_progress(annotator_id: str, request: Request) -> JSONResponse:
        check_token(request)
        return JSONResponse(_blind_guard(store, store.progress(annotator_id)))

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
