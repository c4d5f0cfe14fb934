import numpy as np
import pytest

from oee.envs.gridworld import Gridworld, GridworldSpec


@pytest.fixture(scope="session")
def grid_pair_10():
    return Gridworld(GridworldSpec(10, 0.3)), Gridworld(GridworldSpec(10, 0.1))


@pytest.fixture(scope="session")
def grid_pair_5():
    return Gridworld(GridworldSpec(5, 0.3)), Gridworld(GridworldSpec(5, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ----- acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture(scope="session")
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict} | " + " | ".join(d for _, d in parts))
