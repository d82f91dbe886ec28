import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


_ACCEPTANCE_LINES = []


class _AcceptanceLog:
    def record(self, cid, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {cid}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return _AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
