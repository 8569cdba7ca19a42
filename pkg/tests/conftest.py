import pytest

N_CRITERIA = 11

# criterion number -> (passed, detail); filled in by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record an acceptance verdict, then assert it so pytest agrees with the summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        assert passed, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    ran = {rep.nodeid for reports in terminalreporter.stats.values() for rep in reports if getattr(rep, "nodeid", "")}
    if not any("test_acceptance.py" in nodeid for nodeid in ran):
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        passed, detail = ACCEPTANCE.get(n, (False, "not evaluated (deselected, or errored before a verdict)"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
