"""Embedded HTTP service for human candidate selection and assessments.

Selection sessions show the original plate next to the surviving candidates
and wait for a click; assessment sessions show one adversarial image and
collect the two interview answers.  Assessment payloads never contain the
true label (or anything it can be recovered from): the reading question
must be unprimed.  Sessions resolve exactly once - concurrent clients get
one 200 and one 409.
"""

from __future__ import annotations

import io
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import HTMLResponse
from pydantic import BaseModel
from PIL import Image

from .core import PlateImage

__all__ = [
    "ReviewSession",
    "SessionStore",
    "build_app",
    "ReviewServer",
    "serve",
]

API_VERSION = "v1"


def _png_bytes(img: PlateImage) -> bytes:
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="L").save(buf, format="PNG")
    return buf.getvalue()


class ReviewSession:
    """One pending decision: selection or assessment.

    State machine: pending -> resolved | expired, no other transitions.
    ``secret`` fields (the true label for assessment sessions) are kept
    server-side only and never serialized into payloads.
    """

    def __init__(self, sid: str, kind: str, payload: dict, secret: dict | None = None):
        if kind not in ("selection", "assessment"):
            raise ValueError(f"unknown session kind {kind!r}")
        self.id = sid
        self.kind = kind
        self.payload = payload
        self.secret = secret or {}
        self.state = "pending"
        self.resolution: dict | None = None
        self._event = threading.Event()
        self._lock = threading.Lock()

    def wait(self, timeout: float | None = None) -> bool:
        return self._event.wait(timeout)

    def _transition(self, to_state: str, resolution: dict | None) -> bool:
        with self._lock:
            if self.state != "pending":
                return False
            self.state = to_state
            self.resolution = resolution
            self._event.set()
            return True

    def resolve(self, resolution: dict) -> bool:
        """Exactly-once resolution; False when already resolved/expired."""
        return self._transition("resolved", resolution)

    def expire(self) -> bool:
        return self._transition("expired", None)


class SessionStore:
    """Thread-safe registry of sessions and the images they reference."""

    def __init__(self):
        self._sessions: dict = {}
        self._images: dict = {}
        self._lock = threading.Lock()
        self._counter = 0

    def _new_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"s{self._counter:04d}-{uuid.uuid4().hex[:8]}"

    def _register_image(self, img: PlateImage) -> str:
        token = uuid.uuid4().hex
        self._images[token] = _png_bytes(img)
        return f"/img/{token}.png"

    def image_bytes(self, token: str) -> bytes | None:
        return self._images.get(token)

    def create_selection_session(
        self,
        outcome_id: str,
        original: PlateImage,
        original_label: str,
        candidates,
    ) -> ReviewSession:
        candidates = list(candidates)
        if not candidates:
            raise ValueError("selection session needs at least one candidate")
        payload = {
            "outcome_id": outcome_id,
            "original_label": original_label,
            "original_image": self._register_image(original),
            "candidate_images": [self._register_image(c) for c in candidates],
            "count": len(candidates),
        }
        session = ReviewSession(self._new_id(), "selection", payload)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def create_assessment_session(
        self, outcome_id: str, image: PlateImage, true_label: str | None = None
    ) -> ReviewSession:
        # The true label, if supplied for bookkeeping, stays in the secret
        # side; the client payload must not leak it.
        payload = {
            "outcome_id": outcome_id,
            "image": self._register_image(image),
        }
        secret = {"true_label": true_label} if true_label is not None else {}
        session = ReviewSession(self._new_id(), "assessment", payload, secret)
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, sid: str) -> ReviewSession | None:
        return self._sessions.get(sid)

    def pending(self) -> list:
        return [s for s in self._sessions.values() if s.state == "pending"]

    def all_sessions(self) -> list:
        return list(self._sessions.values())


class _SelectionBody(BaseModel):
    index: int


class _AssessmentBody(BaseModel):
    q1: bool
    q2: str


_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>plateforge review</title></head>
<body><h1>plateforge review service</h1>
<p>The review UI bundle is not built. The JSON API is live under
<code>/api/v1/sessions</code>; build the frontend to get the browser flows.</p>
</body></html>"""


def build_app(store: SessionStore, static_dir=None) -> FastAPI:
    """Assemble the FastAPI app serving the session API and the static UI."""
    app = FastAPI(title="plateforge review", docs_url=None, redoc_url=None)
    token_required = os.environ.get("PLATEFORGE_REVIEW_TOKEN")

    if static_dir is None:
        static_dir = Path(__file__).parent / "static"
    static_dir = Path(static_dir)

    def check_auth(request: Request):
        if token_required:
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token_required}":
                raise HTTPException(status_code=401, detail="missing bearer token")

    def session_or_404(sid: str) -> ReviewSession:
        session = store.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    def list_sessions(request: Request):
        check_auth(request)
        out = []
        for s in store.pending():
            counts = {}
            if s.kind == "selection":
                counts["candidates"] = s.payload["count"]
            out.append({"id": s.id, "kind": s.kind, "counts": counts})
        return out

    def get_session(sid: str, request: Request):
        check_auth(request)
        s = session_or_404(sid)
        return {"id": s.id, "kind": s.kind, "state": s.state, **s.payload}

    def post_selection(sid: str, body: _SelectionBody, request: Request):
        check_auth(request)
        s = session_or_404(sid)
        if s.kind != "selection":
            raise HTTPException(status_code=422, detail="not a selection session")
        if not 0 <= body.index < s.payload["count"]:
            raise HTTPException(
                status_code=422,
                detail=f"index {body.index} out of range 0..{s.payload['count'] - 1}",
            )
        if not s.resolve({"index": body.index}):
            raise HTTPException(status_code=409, detail="session already resolved")
        return {"ok": True, "id": s.id, "index": body.index}

    def post_assessment(sid: str, body: _AssessmentBody, request: Request):
        check_auth(request)
        s = session_or_404(sid)
        if s.kind != "assessment":
            raise HTTPException(status_code=422, detail="not an assessment session")
        # q2 is stored verbatim; normalization happens downstream at judging.
        if not s.resolve({"q1": body.q1, "q2": body.q2}):
            raise HTTPException(status_code=409, detail="session already resolved")
        return {"ok": True, "id": s.id}

    for prefix in (f"/api/{API_VERSION}", "/api"):
        app.get(f"{prefix}/sessions")(list_sessions)
        app.get(f"{prefix}/sessions/{{sid}}")(get_session)
        app.post(f"{prefix}/sessions/{{sid}}/selection")(post_selection)
        app.post(f"{prefix}/sessions/{{sid}}/assessment")(post_assessment)

    @app.get("/img/{token}.png")
    def get_image(token: str):
        data = store.image_bytes(token)
        if data is None:
            raise HTTPException(status_code=404, detail="unknown image")
        return Response(content=data, media_type="image/png")

    @app.get("/", response_class=HTMLResponse)
    def index():
        page = static_dir / "index.html"
        if page.exists():
            return HTMLResponse(page.read_text(encoding="utf-8"))
        return HTMLResponse(_FALLBACK_PAGE)

    @app.get("/static/{name}")
    def static_file(name: str):
        # Flat bundle directory; path segments are rejected outright.
        if "/" in name or "\\" in name or ".." in name:
            raise HTTPException(status_code=404, detail="not found")
        path = static_dir / name
        if not path.is_file():
            raise HTTPException(status_code=404, detail="not found")
        media = "text/javascript" if name.endswith(".js") else "text/plain"
        if name.endswith(".css"):
            media = "text/css"
        if name.endswith(".html"):
            media = "text/html"
        return Response(content=path.read_bytes(), media_type=media)

    return app


class ReviewServer:
    """Uvicorn wrapper running the review app on a background thread."""

    def __init__(self, store: SessionStore, host: str = "127.0.0.1",
                 port: int = 8321, static_dir=None):
        import uvicorn

        self.store = store
        self.app = build_app(store, static_dir=static_dir)
        config = uvicorn.Config(
            self.app, host=host, port=port, log_level="warning"
        )
        self._server = uvicorn.Server(config)
        self._thread: threading.Thread | None = None
        self.host = host
        self.port = port

    def start(self, wait_ready: float = 10.0) -> None:
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + wait_ready
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError(f"review server failed to bind {self.host}:{self.port}")
            if not self._thread.is_alive():
                raise RuntimeError(f"review server exited while binding {self.host}:{self.port}")
            time.sleep(0.02)

    def stop(self) -> None:
        # Graceful: uvicorn finishes in-flight requests before exiting.
        self._server.should_exit = True
        if self._thread is not None:
            self._thread.join(timeout=10.0)

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"


def serve(bind: str, store: SessionStore, static_dir=None) -> ReviewServer:
    """Start the review service on ``bind`` ("host:port"); returns the
    running server handle (stop() shuts it down gracefully)."""
    host, _, port = bind.partition(":")
    server = ReviewServer(
        store, host=host or "127.0.0.1", port=int(port or 8321), static_dir=static_dir
    )
    server.start()
    return server
