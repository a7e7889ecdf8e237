import sys
from pathlib import Path

import numpy as np
import pytest

import radialbcs as rb
from radialbcs import _pykernels

sys.path.insert(0, str(Path(__file__).parent))

try:
    from radialbcs import _ckernels
except ImportError:  # extension not built
    _ckernels = None

MU = 1.0
P_MAX = 8.0
ELL_MAX = 12

BACKENDS = [pytest.param(_pykernels, id="python")]
BACKENDS.append(pytest.param(_ckernels, id="cython", marks=pytest.mark.skipif(
    _ckernels is None, reason="compiled extension not built")))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def default_spec():
    return rb.PotentialSpec.gaussian(2.0)


@pytest.fixture(scope="session")
def engineered_spec():
    """Attractive well with a repulsive core; the l = 2 sector wins."""
    return rb.PotentialSpec.two_gaussian((1.0, -3.0), (3.0, 1.0))


@pytest.fixture(scope="session")
def grid256():
    return rb.build_grid(P_MAX, 256, MU, 2)


@pytest.fixture(scope="session")
def grid128():
    return rb.build_grid(P_MAX, 128, MU, 2)


@pytest.fixture(scope="session")
def grid64():
    return rb.build_grid(P_MAX, 64, MU, 2)


@pytest.fixture(scope="session")
def kernels256(default_spec, grid256):
    return rb.assemble_sector_kernels(default_spec, range(0, ELL_MAX + 1, 2), grid256)


@pytest.fixture(scope="session")
def report256(default_spec, grid256, kernels256):
    return rb.critical_report(default_spec, grid256, MU, ELL_MAX, kernels256)


@pytest.fixture(scope="session")
def engineered_kernels(engineered_spec, grid256):
    return rb.assemble_sector_kernels(engineered_spec, range(0, ELL_MAX + 1, 2), grid256)


@pytest.fixture(scope="session")
def engineered_report(engineered_spec, grid256, engineered_kernels):
    return rb.critical_report(engineered_spec, grid256, MU, ELL_MAX, engineered_kernels)


@pytest.fixture(scope="session")
def spec3d():
    return rb.PotentialSpec.gaussian(2.0, dimension=3)


@pytest.fixture(scope="session")
def grid3d():
    return rb.build_grid(P_MAX, 256, MU, 3)


@pytest.fixture(scope="session")
def kernel3d(spec3d, grid3d):
    return rb.assemble_sector_kernel(spec3d, 0, grid3d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE = {}


class Criterion:
    """Records the outcome of one part of a numbered acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title

    def check(self, part, ok, detail=""):
        ACCEPTANCE.setdefault(self.number, {"title": self.title, "parts": []})
        ACCEPTANCE[self.number]["parts"].append((part, bool(ok), detail))
        return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[number]
        ok = all(p[1] for p in entry["parts"])
        detail = "; ".join(f"{name}: {'ok' if good else 'FAIL'}{' (' + d + ')' if d else ''}"
                           for name, good, d in entry["parts"])
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {entry['title']} -- {detail}")
