import os
import sys

import pytest
from fastapi.testclient import TestClient

# Add the project root to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from backend.logging_config import configure_logging  # noqa: E402
from backend.main import create_app  # noqa: E402
from backend.registry import open_store  # noqa: E402

# store writes log at INFO; keep them off the stdout the CLI tests capture
configure_logging("WARNING")


@pytest.fixture(scope="function")
def store(tmp_path):
    s = open_store(tmp_path / "store")
    yield s
    s.close()


@pytest.fixture(scope="function")
def client(store):
    with TestClient(create_app(store)) as c:
        yield c
