import pytest
from hypothesis import settings

from artifact import scattering as sc
from artifact.potential import make_soft_sphere

settings.register_profile("artifact", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("artifact")

_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def weak_sphere():
    return make_soft_sphere(2.0, 0.25)


@pytest.fixture(scope="session")
def strong_sphere():
    return make_soft_sphere(200.0, 0.25)


@pytest.fixture(scope="session")
def weak_solution(weak_sphere):
    return sc.solve_neumann(weak_sphere, 100, 0.25)


@pytest.fixture(scope="session")
def weak_table(weak_solution):
    return sc.eta_coefficients(weak_solution, 8)


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(number, passed, detail)."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])

