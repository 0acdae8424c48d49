from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
REPO_DIR = TESTS_DIR.parent
FIXTURES_DIR = REPO_DIR / "fixtures"

sys.path.insert(0, str(TESTS_DIR))

from mirage.config import RunConfig  # noqa: E402


@pytest.fixture
def config() -> RunConfig:
    return RunConfig()


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR
