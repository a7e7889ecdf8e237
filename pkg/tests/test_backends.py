import os
import subprocess
import sys

import pytest

import radialbcs as rb
from radialbcs.checks import check_weak_coupling

SNIPPET = (
    "import radialbcs as rb;"
    "g = rb.build_grid(8.0, 64, 1.0, 2);"
    "print(rb.BACKEND, repr(rb.critical_temperature_sector(rb.PotentialSpec.gaussian(2.0), g, 1.0, 0)))"
)


def run_snippet(pure):
    env = dict(os.environ)
    env.pop("RADIALBCS_PURE_PYTHON", None)
    if pure:
        env["RADIALBCS_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    return out[0], float(out[1])


def test_pure_python_switch_and_agreement():
    name_py, tc_py = run_snippet(True)
    name_default, tc_default = run_snippet(False)
    assert name_py == "python"
    try:
        from radialbcs import _ckernels  # noqa: F401
    except ImportError:
        pytest.skip("compiled extension not built")
    assert name_default == "cython"
    assert tc_default == pytest.approx(tc_py, rel=1e-12)


def test_weak_coupling_check_skips_when_unresolved(grid128):
    out = check_weak_coupling(rb.PotentialSpec.gaussian(2.0), 1.0, 0.05, grid128, 12)
    assert out["passed"] is None and "skipped" in out
    out = check_weak_coupling(rb.PotentialSpec.gaussian(10.0), 1.0, 0.05, grid128, 12)
    assert out["passed"] is True and out["solver_ell0"] == 0
