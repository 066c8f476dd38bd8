import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tempattn.attention import DegenerateMaskWarning

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_degenerate_masks():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateMaskWarning)
        yield


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed now and in the session summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"acceptance {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
