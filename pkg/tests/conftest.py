import numpy as np
import pytest

# (number, description, passed, detail) recorded by the acceptance suite and
# echoed after the run, one line per criterion.
_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def criterion():
    def record(num: int, description: str, passed: bool, detail: str = ""):
        _ACCEPTANCE.append((num, description, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, ok, detail in sorted(_ACCEPTANCE):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
