import pytest

from gridshape.plant import GB_DP, AreaParameters

# Acceptance lines collected during the run and echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def gb():
    """Great Britain aggregate with load damping and secondary control off."""
    return AreaParameters(H=2.19, tau_t=1.0, alpha_g=15.0)


@pytest.fixture
def dp():
    return GB_DP


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
