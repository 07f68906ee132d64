import numpy as np
import pytest

from gpsolid.potential import make_potential


@pytest.fixture(scope="session")
def vdw():
    return make_potential("vdw")


@pytest.fixture(scope="session")
def gaussian():
    return make_potential("gaussian")


@pytest.fixture(scope="session")
def gaussian2d():
    return make_potential("gaussian", dim=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(capsys):
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
