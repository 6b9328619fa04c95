"""Novel-text embedding service.

POST /embed {"tokens": [...]} returns the backend's sentence vector and
per-token vectors; deterministic for a frozen backend, so the classifier
engine can prune, add-by-text and perturb through this endpoint.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import EmbeddingBackend


def create_app(backend: EmbeddingBackend) -> FastAPI:
    app = FastAPI(title="lm-exporter embed service", version="1")

    @app.get("/health")
    def health():
        return {"backend": backend.name, "dim": backend.dim}

    @app.post("/embed")
    async def embed(request: Request):
        body = await request.json()
        tokens = body.get("tokens")
        if not tokens or not isinstance(tokens, list):
            return JSONResponse(
                status_code=400,
                content={"error": "EmptyInput", "detail": "tokens must be a nonempty list"},
            )
        sentence_vec, token_vecs = backend.encode([str(t) for t in tokens])
        return {
            "dim": backend.dim,
            "sentence_vec": [float(v) for v in sentence_vec],
            "token_vecs": [[float(v) for v in row] for row in token_vecs],
        }

    return app


def embed_service(backend: EmbeddingBackend, port: int, host: str = "127.0.0.1"):
    """Serve until interrupted."""
    import uvicorn

    uvicorn.run(create_app(backend), host=host, port=port, log_level="warning")
