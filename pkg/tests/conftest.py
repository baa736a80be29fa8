import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holodesign.grid import AmplitudeImage, disc_source, homogeneous_medium, make_grid
from holodesign.material import MaterialPair
from holodesign.objective import TargetSpec
from holodesign.propagation import ASPlan
from holodesign.scenario import Scenario

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

F0 = 2e6
C0 = 1480.0
WAVELENGTH = C0 / F0

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    number, title = item_marker
    status = "PASS" if report.passed else "FAIL"
    prev = _criteria.get(number)
    if prev is None or prev[1] == "PASS":
        _criteria[number] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = (str(marker.args[0]), marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria, key=lambda n: int(n)):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number} [{status}] {title}")


def small_scenario(n_axial=48, n_trans=48, seed=0, ppw=6.0, absorber=10, lens_axial=8, lens_trans=20):
    """A 2D lens scenario on an ``n_axial x n_trans`` grid with a random
    smooth two-lobe target."""
    dx = WAVELENGTH / ppw
    grid = make_grid((n_axial, n_trans), dx, absorber)
    bg = homogeneous_medium(grid, C0, 1000.0)
    src_idx = absorber + 2
    src = disc_source(grid, src_idx, (n_trans - 2 * absorber - 4) * dx, F0)
    pair = MaterialPair((2035.0, 1128.0, 40.0), (2473.0, 1181.0, 10.0))
    l0 = src_idx + 1
    t0 = (n_trans - lens_trans) // 2
    ext = l0 + lens_axial
    rng = np.random.default_rng(seed)
    x = (np.arange(n_trans) - (n_trans - 1) / 2) * dx
    centres = rng.uniform(-0.3, 0.3, 2) * n_trans * dx
    q0 = sum(np.exp(-((x - c) / (2 * dx)) ** 2) for c in centres)
    target = TargetSpec(AmplitudeImage.from_array(q0, dx), q0 > 0.5 * q0.max(), 3 * WAVELENGTH)
    plan = ASPlan((n_trans,), dx, C0, F0)
    return Scenario(bg, src, pair, (l0, t0), (lens_axial, lens_trans), ext, target, plan)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
