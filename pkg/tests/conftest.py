import os
import sys
import warnings

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from tfnuclear.gabor import GaborSystem, canonical_dual, gaussian_window  # noqa: E402
from tfnuclear.grid import TruncationWarning  # noqa: E402
from tfnuclear.lattice import LatticeSpec  # noqa: E402

SQRT_2PI = float(np.sqrt(2 * np.pi))


@pytest.fixture(scope="session")
def window():
    return gaussian_window()


@pytest.fixture(scope="session")
def system(window):
    """alpha0 = beta0 = 1, K = N = 16 on the default grid, with its canonical dual."""
    sys_ = GaborSystem(LatticeSpec(1.0, 1.0, 1, 16, 16), window)
    canonical_dual(sys_)
    return sys_


@pytest.fixture(scope="session")
def dense_system():
    """alpha0 = beta0 = 1/4 on a smaller grid, close to a tight frame."""
    w = gaussian_window(1, 6.0, 1 / 32)
    sys_ = GaborSystem(LatticeSpec(0.25, 0.25, 1, 28, 28), w)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        canonical_dual(sys_)
    return sys_


@pytest.fixture(scope="session")
def critical_system(window):
    return GaborSystem(LatticeSpec(SQRT_2PI, SQRT_2PI, 1, 16, 16), window)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        title, passed, detail = mod.RESULTS[num]
        terminalreporter.write_line(
            f"criterion {num:2d} {'PASS' if passed else 'FAIL'}  {title}  [{detail}]")
