import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE.append(f"criterion {number}: {status}  {title}" + (f"  ({detail})" if detail else ""))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
