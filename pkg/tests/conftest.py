import numpy as np
import pytest

from lsdg import (
    CostModel,
    DynamicsModel,
    GameSpec,
    RunningCost,
    TerminalCost,
    build_interaction_matrix,
    moving_wells_spec,
)


def zero_cost_spec(players=2, sigma=1.0, horizon=1.0, dt=0.01, alpha=None, nominal=0.0):
    alpha = np.eye(players) if alpha is None else alpha
    return GameSpec(
        players=players,
        dynamics=DynamicsModel.brownian(sigma),
        costs=tuple(CostModel(RunningCost(), TerminalCost()) for _ in range(players)),
        nominal_controls=tuple(np.array([nominal]) for _ in range(players)),
        interaction=build_interaction_matrix(alpha),
        horizon=horizon,
        dt=dt,
        initial_state=np.zeros(1),
    )


@pytest.fixture
def wells():
    """Moving-wells game on a coarse time grid (fast)."""
    return moving_wells_spec(0.6, dt=0.02)


@pytest.fixture
def zero_spec():
    return zero_cost_spec()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
