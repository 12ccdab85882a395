"""Shared hooks: the acceptance suite reports one line per criterion."""

ACCEPTANCE = {}


def record(number: int, passed: bool, text: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {text}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
