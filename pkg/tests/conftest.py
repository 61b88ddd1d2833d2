from pathlib import Path

import pytest

from support import MockFdp, MockRemote, copy_demo


@pytest.fixture
def demo(tmp_path, monkeypatch) -> Path:
    """A fresh copy of the demo workspace with an invocation counter."""
    ws = copy_demo(tmp_path / "demo")
    monkeypatch.setenv("AIMP_DEMO_COUNTER", str(tmp_path / "invocations.txt"))
    return ws


@pytest.fixture
def fdp():
    server = MockFdp()
    yield server
    server.close()


@pytest.fixture
def remote():
    server = MockRemote()
    yield server
    server.close()
