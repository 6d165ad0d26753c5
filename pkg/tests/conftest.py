import pytest

from bubblenondeg.bubble import make_params
from bubblenondeg.radialgrid import build_grid

INSTANCES = [(3, 1.5), (3, 2.0), (4, 3.0), (5, 2.5)]


@pytest.fixture(params=INSTANCES, ids=lambda np_: f"N{np_[0]}-p{np_[1]:g}")
def params(request):
    return make_params(*request.param)


@pytest.fixture(scope="session")
def default_grid():
    return build_grid()


@pytest.fixture(scope="session")
def default_sweeps():
    """Two independent runs of the default sweep."""
    from bubblenondeg.report import RunConfig, run_sweep
    return run_sweep(RunConfig()), run_sweep(RunConfig())


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(n: int, title: str, ok: bool, detail: str):
        line = f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
