"""HTTP surface of the recognition service.

Handlers never run embedding math. They decode the request, enqueue a job on
the service's work queue and await its future, so the event loop stays free
for ``/healthz``, ``/getUinfo`` and ``/events`` while workers are busy.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import json
from contextlib import asynccontextmanager
from urllib.parse import parse_qs

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from ..errors import FormatError, InvalidArgument, NoFaceError, Overloaded
from .core import RecognitionService

RETRY_AFTER_S = 1


class RegisterRequest(BaseModel):
    user_id: str = Field(min_length=1)
    image_b64: str


class RegisterResponse(BaseModel):
    status: str
    embedding: list[float]


class RecognizeRequest(BaseModel):
    request_id: str = Field(min_length=1)
    frames_b64: list[str] = Field(min_length=1)


class MatchOut(BaseModel):
    user_id: str
    distance: float
    score: float


class FrameError(BaseModel):
    frame: int
    error: str


class CandidateList(BaseModel):
    request_id: str
    matches: list[MatchOut]
    frame_errors: list[FrameError] = []


class Health(BaseModel):
    status: str
    queue_depth: int


class ErrorBody(BaseModel):
    error: str
    retryable: bool = False
    detail: str = ""


def _b64(text: str) -> bytes | None:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        return None


def _error(status: int, error: str, detail: str = "", retryable: bool = False, headers=None) -> JSONResponse:
    body = ErrorBody(error=error, retryable=retryable, detail=detail)
    return JSONResponse(body.model_dump(), status_code=status, headers=headers)


def create_app(service: RecognitionService, manage_lifecycle: bool = True) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if manage_lifecycle:
            service.start()
        yield
        if manage_lifecycle:
            service.close()

    app = FastAPI(title="siamface", lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(Overloaded)
    async def overloaded(request: Request, exc: Overloaded):
        return _error(503, "overloaded", str(exc), retryable=True, headers={"Retry-After": str(RETRY_AFTER_S)})

    @app.exception_handler(NoFaceError)
    async def no_face(request: Request, exc: NoFaceError):
        return _error(422, "no_face", str(exc))

    @app.exception_handler(FormatError)
    async def bad_format(request: Request, exc: FormatError):
        return _error(400, "format", str(exc))

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        detail = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        return _error(400, "invalid_argument", detail)

    @app.exception_handler(InvalidArgument)
    async def invalid(request: Request, exc: InvalidArgument):
        return _error(400, "invalid_argument", str(exc))

    @app.post("/register", response_model=RegisterResponse)
    async def register(req: RegisterRequest):
        image = _b64(req.image_b64)
        if image is None:
            raise FormatError("image_b64 is not valid base64")
        return await asyncio.wrap_future(service.submit_register(req.user_id, image))

    @app.post("/recognize", response_model=CandidateList)
    async def recognize(req: RecognizeRequest):
        n_max = service.config.n_max
        if len(req.frames_b64) > n_max:
            raise InvalidArgument(f"at most {n_max} frames per request, got {len(req.frames_b64)}")
        frames = [_b64(f) for f in req.frames_b64]
        return await asyncio.wrap_future(service.submit_recognize(req.request_id, frames))

    @app.post("/postUid")
    async def post_uid(request: Request):
        form = parse_qs((await request.body()).decode("utf-8", "replace"))
        candidates = []
        for i in (1, 2, 3):
            uid = form.get(f"uid{i}", [""])[0]
            if not uid:
                continue
            try:
                candidates.append((uid, float(form.get(f"value{i}", ["nan"])[0])))
            except ValueError as exc:
                raise InvalidArgument(f"value{i} is not a number") from exc
        if not candidates or not form.get("uid1", [""])[0]:
            raise InvalidArgument("uid1 and value1 are required")
        events = service.post_uids(candidates)
        return {"status": "ok", "events": [e.to_dict() for e in events]}

    @app.get("/getUinfo")
    async def get_uinfo():
        return service.presence.snapshot()

    @app.get("/healthz", response_model=Health)
    async def healthz():
        return Health(status="ok", queue_depth=service.queue.depth)

    @app.get("/stats")
    async def stats():
        s = service.queue.stats
        return {"received": s.received, "completed": s.completed, "failed": s.failed, "overloaded": s.overloaded,
                "queue_depth": service.queue.depth, "gallery_size": len(service.gallery)}

    @app.get("/events")
    async def events(request: Request, limit: int = 0):
        """Server-sent display events; ``limit`` > 0 closes the stream after that many."""
        q = service.presence.subscribe()

        async def stream():
            sent = 0
            try:
                yield ": connected\n\n"
                while limit <= 0 or sent < limit:
                    try:
                        ev = await asyncio.wait_for(q.get(), timeout=15)
                    except asyncio.TimeoutError:
                        if await request.is_disconnected():
                            return
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(ev.to_dict())}\n\n"
                    sent += 1
            finally:
                service.presence.unsubscribe(q)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
