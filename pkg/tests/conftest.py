from pathlib import Path

import numpy as np
import pytest

from semispectral.povm import DiscretePOVM

DATA = Path(__file__).parent / "data"

# Lines recorded by test_acceptance.py, echoed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def pvm2() -> DiscretePOVM:
    return DiscretePOVM.from_json(__import__("json").loads((DATA / "pvm2.json").read_text()))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
