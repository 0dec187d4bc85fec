import sys
from pathlib import Path

import pytest

from evoarch.genome import SearchSpaceConfig

STUB_WORKER = Path(__file__).parent / "stub_worker.py"


@pytest.fixture
def space() -> SearchSpaceConfig:
    return SearchSpaceConfig()


def stub_command(*args: str) -> str:
    parts = [sys.executable, str(STUB_WORKER), *args]
    return " ".join(parts)
