"""Shared pytest hooks: the acceptance suite reports one pass/fail line per criterion."""
import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """Call with (tag, ok, detail); records the line and asserts ``ok``."""

    def report(tag: str, ok: bool, detail: str) -> None:
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[tag] = line
        print(line, flush=True)
        assert ok, line

    return report


@pytest.fixture
def stretch(request):
    """Call with (tag, ok, detail); records the line without failing the test."""

    def report(tag: str, ok: bool, detail: str) -> None:
        line = f"{tag} {'MET' if ok else 'NOT MET'} (stretch, not gated): {detail}"
        ACCEPTANCE_LINES[tag] = line
        print(line, flush=True)

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda tag: (int("".join(c for c in tag.split()[0] if c.isdigit()) or 0), tag)
    for tag in sorted(ACCEPTANCE_LINES, key=key):
        terminalreporter.write_line(ACCEPTANCE_LINES[tag])
