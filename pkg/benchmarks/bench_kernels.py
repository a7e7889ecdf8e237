"""Compare the compiled and NumPy kernel backends.

Times the angular-kernel assembly (all even sectors up to ``--ell-max`` on the
upper triangle of an ``--n``-point grid) and checks that both backends agree.
The ``K_T`` symbol is shared by both backends and is not timed.

    python benchmarks/bench_kernels.py --n 256 --repeat 3
"""

import argparse
import time

import numpy as np

import radialbcs as rb
from radialbcs import _pykernels
from radialbcs.potentials import ANGULAR_MAX_LEVEL, ANGULAR_TOL

try:
    from radialbcs import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="radial grid points")
    ap.add_argument("--ell-max", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--kind", choices=["gaussian", "tabulated"], default="gaussian")
    args = ap.parse_args(argv)

    if args.kind == "gaussian":
        spec = rb.PotentialSpec.gaussian(2.0)
    else:
        r = np.linspace(0.0, 10.0, 401)
        spec = rb.PotentialSpec.from_table(r, -2.0 * np.exp(-r ** 2 / 2))
    grid = rb.build_grid(8.0, args.n, 1.0, 2)
    iu, ju = np.triu_indices(grid.size)
    p, q = grid.nodes[iu], grid.nodes[ju]
    ells = np.arange(0, args.ell_max + 1, 2, dtype=float)
    prof = spec.profile_arrays()
    tol = 1e-10 if args.kind == "tabulated" else ANGULAR_TOL

    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    results = {}
    print(f"pairs={p.size} sectors={ells.size} kind={args.kind}")
    for name, mod in backends:
        t_ang, (vals, levels) = best_of(
            lambda: mod.angular_moments(p, q, ells, *prof, 2, tol, ANGULAR_MAX_LEVEL),
            args.repeat)
        results[name] = (t_ang, vals)
        print(f"{name:>7}: angular_moments {t_ang:8.3f} s  (max level {int(levels.max())})")
    if len(results) == 2:
        dv = np.max(np.abs(results["python"][1] - results["cython"][1]))
        speedup = results["python"][0] / results["cython"][0]
        print(f"speedup {speedup:.2f}x, max abs difference {dv:.2e}")
    else:
        print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
