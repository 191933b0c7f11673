"""Shared fixtures: canonical runs are computed once per session."""

from __future__ import annotations

import pytest

from acflow.config import load_config_text
from acflow.experiments import run_canonical, run_eps_sweep

TORUS = """
metric: {kind: flat-torus, side: 2.0}
interface: {kind: circle, center: [1.0, 1.0], radius: 0.5}
eps: {eps}
T: {T}
"""

SPHERE = """
metric: {kind: sphere}
interface: {kind: cap, theta0: 1.0471975511965976}
eps: 0.05
T: 0.3
cadence: 0.01
"""

#: acceptance lines collected by ``tests/test_acceptance.py``
ACCEPTANCE: dict[int, str] = {}


def torus_config(eps, T=0.1):
    return load_config_text(TORUS.replace("{eps}", str(eps)).replace("{T}", str(T)))


@pytest.fixture(scope="session")
def run_005():
    return run_canonical(torus_config(0.05))


@pytest.fixture(scope="session")
def run_0025():
    return run_canonical(torus_config(0.025))


@pytest.fixture(scope="session")
def sweep():
    return run_eps_sweep(torus_config([0.08, 0.04, 0.02]))


@pytest.fixture(scope="session")
def sphere_run():
    return run_canonical(load_config_text(SPHERE))


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        print(ACCEPTANCE[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
