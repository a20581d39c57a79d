import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kramers_exit.domain import build_boundary_quadrature, disk, verify_hypothesis  # noqa: E402
from kramers_exit.potential import anisotropic_quadratic, isotropic_quadratic  # noqa: E402

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

# criterion number -> (passed, message); filled by test_acceptance
ACCEPTANCE = {}


class Bench:
    def __init__(self, p, n_nodes=256):
        self.p = p
        self.dom = disk()
        self.bq = build_boundary_quadrature(self.dom, n_nodes)
        self.report = verify_hypothesis(p, self.dom, self.bq)
        self.x0 = self.report.x0


@pytest.fixture(scope="session")
def radial():
    return Bench(isotropic_quadratic())


@pytest.fixture(scope="session")
def aniso():
    return Bench(anisotropic_quadratic((1.0, 2.0)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")
