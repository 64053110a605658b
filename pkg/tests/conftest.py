import numpy as np
import pytest
from hypothesis import settings

from tnvqc.data import LabeledDataset

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dense_random(rng, shape):
    return rng.standard_normal(shape)


def toy_dataset(x, y, name="toy"):
    return LabeledDataset(np.asarray(x, dtype=float), np.asarray(y, dtype=int), (), name)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, ok, detail: str) -> None:
    """``ok`` is a bool or an explicit status word such as ``"FLAGGED"``."""
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"criterion {number:2d} {status:7s} {name}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
