"""Text embedding service: one loaded model behind POST /embed and GET /health."""

from .backends import Backend, HashBackend, SentenceTransformerBackend, load_backend
from .service import Settings, create_app, main

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "HashBackend",
    "SentenceTransformerBackend",
    "Settings",
    "create_app",
    "load_backend",
    "main",
    "__version__",
]
