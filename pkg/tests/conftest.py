import pytest

from levelmeasure import AnalyticField, DistanceField, QuadratureConfig, estimate_measure
from levelmeasure.estimator import build_cells
from levelmeasure.geometry import circle_curve, polygon_curve

_ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])


@pytest.fixture(scope="session")
def paraboloid():
    return AnalyticField("x^2+y^2-1", 2)


@pytest.fixture(scope="session")
def paraboloid_cells(paraboloid):
    return build_cells(paraboloid, QuadratureConfig(R=1.0))


@pytest.fixture(scope="session")
def paraboloid_estimate(paraboloid, paraboloid_cells):
    return estimate_measure(paraboloid, QuadratureConfig(R=1.0), cells=paraboloid_cells)


@pytest.fixture(scope="session")
def circle4096():
    return circle_curve(4096)


@pytest.fixture(scope="session")
def distance_circle_estimate(circle4096):
    return estimate_measure(DistanceField(circle4096), QuadratureConfig(R=1.0))


@pytest.fixture(scope="session")
def unit_square():
    return polygon_curve([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture(scope="session")
def square_estimate(unit_square):
    return estimate_measure(DistanceField(unit_square), QuadratureConfig(R=1.0))
