import numpy as np
import pytest

from nimp.core import HilbertSpace
from nimp.lattice import (
    CorrelationTask,
    Schedule,
    all_up,
    magnetization,
    product_state,
    site_spin,
    spin_coherent_site,
    tfim_hamiltonian,
)

COHERENT_ANGLES = [(0.7, 0.3), (1.1, -0.4), (0.2, 0.9)]


def coherent_state(space, angles=COHERENT_ANGLES, s=0.5):
    return product_state(space, [spin_coherent_site(s, th, ph) for th, ph in angles])


def tfim_task(O1="s1z", psi="coherent", t1=0.3, t2=0.7, N=3):
    space = HilbertSpace.spins(N)
    schedule = Schedule.constant(tfim_hamiltonian(N))
    if O1 == "s1z":
        op1 = site_spin(space, 0, "z")
    elif O1 == "mz":
        op1 = magnetization(space, "z")
    else:
        op1 = O1
    state = coherent_state(space) if psi == "coherent" else all_up(space)
    return CorrelationTask(state, op1, t1, site_spin(space, N - 1, "z"), t2, schedule)


@pytest.fixture
def task():
    return tfim_task()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance summary: one PASS/FAIL line per criterion ------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA[props["criterion"]] = (status, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}")
