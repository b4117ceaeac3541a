"""HTTP boundary for the browser annotation client.

GET  /api/pending      -> 200 pending AnnotationRequest | 204 none
POST /api/annotations  -> 200 accepted | 409 stale id | 400 invalid boxes
GET  /api/status       -> engine state, frame counter, latest stats
GET  /ui/...           -> static files of the browser client, when present

Handlers serialize through the engine's single pending-request slot, so the
protocol itself enforces one annotation round-trip at a time.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, RedirectResponse
from fastapi.staticfiles import StaticFiles

from .annotate import (
    AnnotationResponse,
    InvalidResponseError,
    PendingSlot,
    StaleResponseError,
)

__all__ = ["create_app", "resolve_bind", "ui_directory"]

DEFAULT_BIND = "127.0.0.1:8750"
BIND_ENV_VAR = "REFINERY_BIND"


def resolve_bind(flag_value: str | None = None, config_value: str | None = None) -> tuple[str, int]:
    """Bind resolution order: CLI flag, REFINERY_BIND, config file, default."""
    raw = flag_value or os.environ.get(BIND_ENV_VAR) or config_value or DEFAULT_BIND
    host, _, port = raw.partition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind must look like host:port, got {raw!r}")
    return host, int(port)


def ui_directory() -> Path | None:
    """Locate built browser-client assets, if any."""
    candidates = [
        Path(__file__).resolve().parent / "ui",
        Path(__file__).resolve().parents[2] / "frontend" / "dist",
    ]
    for c in candidates:
        if (c / "index.html").is_file():
            return c
    return None


def create_app(engine, slot: PendingSlot, ui_dir: Path | None = None) -> FastAPI:
    """Wire the slot and an engine's status into a FastAPI application."""
    app = FastAPI(title="refinery annotation service")

    @app.get("/api/pending")
    def pending():
        request = slot.pending()
        if request is None:
            return Response(status_code=204)
        return JSONResponse(request.to_payload())

    @app.post("/api/annotations")
    async def annotations(http_request: Request):
        doc = await http_request.json()
        try:
            response = AnnotationResponse.from_payload(doc)
        except (KeyError, TypeError, ValueError) as err:
            return JSONResponse({"error": f"malformed response: {err}"}, status_code=400)
        try:
            slot.submit(response)
        except StaleResponseError as err:
            return JSONResponse({"error": str(err)}, status_code=409)
        except InvalidResponseError as err:
            return JSONResponse({"error": str(err)}, status_code=400)
        return JSONResponse({"ok": True})

    @app.get("/api/status")
    def status():
        return JSONResponse(engine.status())

    ui = ui_dir if ui_dir is not None else ui_directory()
    if ui is not None:
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

        @app.get("/")
        def root():
            return RedirectResponse("/ui/")

    return app
