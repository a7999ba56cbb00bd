"""HTTP facade over a single embedding model.

POST /embed takes {"texts": [...], "normalize": bool} and answers with
order-aligned vectors plus the model tag and dimension. GET /health
reports the same tag and dimension once the model is up. The model is
loaded once at startup; request handling itself is stateless, so the
service is safe to hit concurrently.
"""

from __future__ import annotations

import argparse
import os
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass
from typing import Mapping

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .backends import Backend, load_backend, unit

DEFAULT_MODEL = "all-MiniLM-L6-v2"


@dataclass
class Settings:
    model: str = DEFAULT_MODEL
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8094
    max_texts: int = 256
    max_text_chars: int = 8192
    batch_size: int = 32

    @classmethod
    def from_env(cls, env: Mapping[str, str] = os.environ) -> Settings:
        return cls(
            model=env.get("EMBEDBOX_MODEL", DEFAULT_MODEL),
            device=env.get("EMBEDBOX_DEVICE", "cpu"),
            host=env.get("EMBEDBOX_HOST", "127.0.0.1"),
            port=int(env.get("EMBEDBOX_PORT", "8094")),
            max_texts=int(env.get("EMBEDBOX_MAX_TEXTS", "256")),
            max_text_chars=int(env.get("EMBEDBOX_MAX_TEXT_CHARS", "8192")),
            batch_size=int(env.get("EMBEDBOX_BATCH_SIZE", "32")),
        )


class EmbedRequest(BaseModel):
    texts: list[str]
    normalize: bool = False


def create_app(settings: Settings | None = None, backend: Backend | None = None) -> FastAPI:
    """Build the service app.

    Passing a backend skips model loading, which is how tests substitute
    instrumented encoders. Without one, the lifespan hook loads the
    configured model exactly once before the first request is served.
    """
    cfg = settings or Settings.from_env()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.backend is None:
            app.state.backend = load_backend(cfg.model, device=cfg.device)
        yield

    app = FastAPI(title="embedbox", lifespan=lifespan)
    app.state.settings = cfg
    app.state.backend = backend
    # Single model instance shared across worker threads.
    app.state.encode_lock = threading.Lock()

    @app.get("/health")
    def health():
        loaded = app.state.backend
        if loaded is None:
            raise HTTPException(status_code=503, detail="model is loading")
        return {"status": "ok", "model": loaded.model, "dim": loaded.dim}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        loaded = app.state.backend
        if loaded is None:
            raise HTTPException(status_code=503, detail="model is loading")
        if not request.texts:
            raise HTTPException(status_code=400, detail="texts must not be empty")
        if len(request.texts) > cfg.max_texts:
            raise HTTPException(
                status_code=400,
                detail=f"too many texts: {len(request.texts)} > limit {cfg.max_texts}",
            )
        for index, text in enumerate(request.texts):
            if text == "":
                raise HTTPException(status_code=400, detail=f"empty text at index {index}")
            if len(text) > cfg.max_text_chars:
                raise HTTPException(
                    status_code=400,
                    detail=(
                        f"text at index {index} is {len(text)} characters, "
                        f"limit {cfg.max_text_chars}"
                    ),
                )
        vectors: list[list[float]] = []
        with app.state.encode_lock:
            for start in range(0, len(request.texts), cfg.batch_size):
                vectors.extend(loaded.encode(request.texts[start : start + cfg.batch_size]))
        if request.normalize:
            vectors = [unit(vector) for vector in vectors]
        return {"model": loaded.model, "dim": loaded.dim, "embeddings": vectors}

    return app


def main(argv: list[str] | None = None) -> None:
    defaults = Settings.from_env()
    parser = argparse.ArgumentParser(
        prog="embedbox",
        description="Serve an embedding model over HTTP (/embed, /health).",
    )
    parser.add_argument("--host", default=defaults.host)
    parser.add_argument("--port", type=int, default=defaults.port)
    parser.add_argument(
        "--model",
        default=defaults.model,
        help="checkpoint name, or hash-<dim> for the model-free encoder",
    )
    parser.add_argument("--device", default=defaults.device)
    args = parser.parse_args(argv)
    defaults.model = args.model
    defaults.device = args.device
    defaults.host = args.host
    defaults.port = args.port
    uvicorn.run(create_app(defaults), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
