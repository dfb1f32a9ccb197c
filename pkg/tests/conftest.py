from __future__ import annotations

import pytest

_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """record(k, ok, detail): print one acceptance line and keep it for the terminal summary."""
    lines = request.config.stash.setdefault(_KEY, [])

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((k, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
