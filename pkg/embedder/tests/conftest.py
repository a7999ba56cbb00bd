from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from embedbox.service import Settings, create_app


@pytest.fixture(scope="module")
def hash_client():
    """Service over the model-free encoder, shared per module for speed."""
    with TestClient(create_app(Settings(model="hash-32"))) as client:
        yield client
