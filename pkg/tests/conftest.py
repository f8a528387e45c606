from contextlib import contextmanager

import pytest

ACCEPTANCE_LINES: list[str] = []


class _Check:
    def __init__(self):
        self.ok = None
        self.detail = ""

    def check(self, ok, detail):
        self.ok = bool(ok)
        self.detail = detail


@pytest.fixture
def criterion():
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextmanager
    def run(number, title):
        state = _Check()
        try:
            yield state
        except Exception as exc:
            ACCEPTANCE_LINES.append(f"FAIL  criterion {number}: {title} -- {type(exc).__name__}: {exc}")
            raise
        verdict = "PASS" if state.ok else "FAIL"
        line = f"{verdict}  criterion {number}: {title} -- {state.detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert state.ok, line

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
