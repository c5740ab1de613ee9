"""HTTP surface: POST /v1/embed, GET /v1/models, GET /healthz."""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from typing import Callable

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .encoder import MAX_TOKEN_CAP, POOLINGS, EncoderError, LoadedEncoder, load_encoder
from .registry import Registry, UnknownModelError

BATCH_CAP = 256  # texts per request; clients batch well below this anyway


class EmbedRequest(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model: str
    texts: list[str] = Field(min_length=1)
    max_tokens: int = Field(default=MAX_TOKEN_CAP, ge=1, le=MAX_TOKEN_CAP)
    pooling: str = "pooler"


class EmbedResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    dim: int
    vectors: list[list[float]]
    model_fingerprint: str


class ModelEntry(BaseModel):
    name: str
    dim: int
    tokenization: str
    loaded: bool


class EncoderPool:
    """Lazy name -> LoadedEncoder cache. Loads are serialized; loaded
    encoders are shared read-only between request threads."""

    def __init__(
        self,
        registry: Registry,
        loader: Callable[..., LoadedEncoder] = load_encoder,
    ) -> None:
        self.registry = registry
        self._loader = loader
        self._encoders: dict[str, LoadedEncoder] = {}
        self._lock = threading.Lock()

    def get(self, name: str) -> LoadedEncoder:
        spec = self.registry.get(name)
        with self._lock:
            got = self._encoders.get(name)
            if got is None:
                got = self._loader(spec)
                self._encoders[name] = got
        return got

    def peek(self, name: str) -> LoadedEncoder | None:
        with self._lock:
            return self._encoders.get(name)

    def loaded(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(sorted(self._encoders))


def create_app(
    registry: Registry | None = None,
    *,
    preload: str | None = None,
    loader: Callable[..., LoadedEncoder] = load_encoder,
) -> FastAPI:
    """Build the service.

    ``preload`` names the checkpoint to warm-load in a background
    thread at startup; /healthz answers 503 until that finishes. With
    ``preload=None`` the service reports ready at once and models load
    on first use.
    """
    reg = registry if registry is not None else Registry()
    if preload is not None:
        reg.get(preload)  # fail fast on typos
    pool = EncoderPool(reg, loader)
    ready = threading.Event()
    boot_errors: list[str] = []

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if preload is None:
            ready.set()
        else:

            def warm() -> None:
                try:
                    pool.get(preload)
                except Exception as exc:
                    boot_errors.append(str(exc))
                else:
                    ready.set()

            threading.Thread(target=warm, name="warm-load", daemon=True).start()
        yield

    app = FastAPI(title="embedserver", lifespan=lifespan)
    app.state.pool = pool
    app.state.ready = ready

    @app.get("/healthz")
    def healthz():
        if not ready.is_set():
            if boot_errors:
                body = {"status": "error", "error": boot_errors[0]}
            else:
                body = {"status": "loading"}
            return JSONResponse(status_code=503, content=body)
        return {"status": "ready", "loaded": list(pool.loaded())}

    @app.get("/v1/models", response_model=list[ModelEntry])
    def list_models():
        entries = []
        for spec in pool.registry.specs:
            enc = pool.peek(spec.name)
            entries.append(
                ModelEntry(
                    name=spec.name,
                    dim=enc.dim if enc is not None else spec.dim,
                    tokenization=spec.tokenization,
                    loaded=enc is not None,
                )
            )
        return entries

    @app.post("/v1/embed", response_model=EmbedResponse)
    def embed(req: EmbedRequest):
        if len(req.texts) > BATCH_CAP:
            raise HTTPException(
                status_code=413,
                detail=f"batch too large: {len(req.texts)} texts exceeds cap {BATCH_CAP}",
            )
        if req.pooling not in POOLINGS:
            raise HTTPException(
                status_code=400,
                detail=f"unknown pooling {req.pooling!r}; expected one of: {', '.join(POOLINGS)}",
            )
        try:
            enc = pool.get(req.model)
        except UnknownModelError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except EncoderError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        try:
            vectors = enc.encode(req.texts, req.max_tokens, req.pooling)
        except Exception as exc:
            raise HTTPException(status_code=500, detail=f"inference failure: {exc}") from exc
        return EmbedResponse(dim=enc.dim, vectors=vectors, model_fingerprint=enc.fingerprint)

    return app
