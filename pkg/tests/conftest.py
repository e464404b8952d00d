import pytest

from fpqn.harness.checks import desk_instance, desk_solve

# one "PASS/FAIL" line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def desk():
    return desk_instance()


@pytest.fixture(scope="session")
def desk_reference(desk):
    """100000 PDFP2O iterations on the desk instance (no early stop)."""
    state, trace, obj = desk_solve(desk, "pdfp2o", tol=1e-300, max_iter=100000)
    return state, obj


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
