"""Low-lying spectra of ``K_T + V_l`` and critical temperatures.

The multiplication operator ``K_T(p) = (p^2 - mu) / tanh((p^2 - mu) / 2T)``
is increasing in ``T``, so every eigenvalue of ``K_T + V_l`` is
nondecreasing in ``T`` (min-max).  The sector critical temperature

    T_c(l) = inf {T >= 0 : K_T + V_l >= 0}

is therefore located by bisection on the sign of the lowest eigenvalue.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._backend import kernels
from ._parallel import ordered_map
from .discretization import GridFunction
from .potentials import assemble_sector_kernels

T_FLOOR = 1e-10
T_CEILING = 1e6
TIE_TOL = 1e-8
SYMMETRY_TOL = 1e-10
RESIDUAL_TOL = 1e-9


class SpectralError(ValueError):
    """Invalid input to a spectral routine."""


class NoTransitionError(RuntimeError):
    """No temperature below the ceiling makes the sector operator nonnegative."""


class DegeneracyWarning(UserWarning):
    """Two sectors share the critical temperature within tolerance."""


@dataclass(frozen=True)
class DispersionParams:
    """Chemical potential and temperature (``k_B = 1``)."""

    mu: float
    temperature: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.temperature)):
            raise SpectralError("mu and temperature must be finite")
        if self.temperature < 0:
            raise SpectralError(f"temperature must be >= 0, got {self.temperature}")

    def at(self, temperature):
        return DispersionParams(self.mu, float(temperature))


def kt_symbol(params, p):
    """``K_T(p)``; equals ``|p^2 - mu|`` at ``T = 0``."""
    x = np.asarray(p, dtype=float) ** 2 - params.mu
    out = kernels.kt_symbol(x, float(params.temperature))
    return float(out) if np.ndim(out) == 0 else out


def kt_delta_symbol(params, p, delta_abs):
    """``K_T^Delta(p) = E / tanh(E / 2T)``, ``E = sqrt((p^2 - mu)^2 + |Delta|^2)``."""
    x = np.asarray(p, dtype=float) ** 2 - params.mu
    d = np.abs(np.asarray(delta_abs, dtype=float))
    out = kernels.kt_delta_symbol(x, d, float(params.temperature))
    return float(out) if np.ndim(out) == 0 else out


def _delta_values(delta, grid):
    if delta is None:
        return None
    if isinstance(delta, GridFunction):
        if delta.grid is not grid:
            raise SpectralError("delta lives on a different grid than the kernel")
        return np.abs(delta.values)
    values = np.abs(np.asarray(delta))
    if values.shape != (grid.size,):
        raise SpectralError("delta has the wrong length for the kernel grid")
    return values


def assemble_operator(params, kernel, delta=None):
    """Symmetrized matrix of ``K_T^Delta + V_l`` on the kernel's grid.

    ``A = diag(K_T^Delta(p_i)) + (2 pi)^(-d/2) M`` with ``M`` the
    measure-symmetrized kernel; ``delta=None`` gives ``K_T + V_l``.
    """
    grid = kernel.grid
    d = _delta_values(delta, grid)
    if d is None:
        diag = kt_symbol(params, grid.nodes)
    else:
        diag = kt_delta_symbol(params, grid.nodes, d)
    a = np.array(kernel.operator, copy=True)
    a[np.diag_indices_from(a)] += diag
    return a


def _check_symmetric(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SpectralError("operator must be a square matrix")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise SpectralError("operator is not symmetric")
    return a


def lowest_eigenvalues(a, k=6):
    """The `k` smallest eigenpairs of a symmetric matrix.

    Returns ``(values, vectors)`` with ``vectors[:, j]`` unit-norm.  Each
    pair is checked against ``||A v - lambda v|| <= 1e-9 ||A||_2``.
    """
    a = _check_symmetric(a)
    n = a.shape[0]
    k = int(min(max(k, 1), n))
    vals, vecs = linalg.eigh(a, subset_by_index=[0, k - 1])
    top = linalg.eigh(a, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    norm = max(abs(vals[0]), abs(top))
    res = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
    if np.any(res > RESIDUAL_TOL * max(norm, np.finfo(float).tiny)):
        raise FloatingPointError(f"eigenpair residual {res.max():.3e} exceeds bound")
    return vals, vecs


def lowest_eigenvalue(a):
    """Smallest eigenvalue only (the bisection workhorse)."""
    return float(linalg.eigh(a, eigvals_only=True, subset_by_index=[0, 0])[0])


def _low_values(a, k):
    k = min(k, a.shape[0])
    return linalg.eigh(a, eigvals_only=True, subset_by_index=[0, k - 1])


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """The lowest eigenpairs of a sector operator at one temperature.

    ``ell`` is a sector label or ``"full"``; eigenvectors are columns in
    measure-symmetrized coordinates.
    """

    ell: object
    temperature: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sector_spectrum(kernel, params, k=6, delta=None):
    vals, vecs = lowest_eigenvalues(assemble_operator(params, kernel, delta), k)
    return SpectralResult(kernel.ell, params.temperature, vals, vecs)


def _bisect(f, lo, hi, tol):
    """Largest-``T`` sign change of a nondecreasing ``f`` with ``f(lo) < 0 <= f(hi)``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expand(f, t_hi):
    while f(t_hi) < 0:
        t_hi *= 2.0
        if t_hi > T_CEILING:
            raise NoTransitionError(
                f"operator still has a negative eigenvalue at T = {T_CEILING:g}")
    return t_hi


def _bisect_tol(t_hi, rel):
    # the nominal bound is 1e-8 * max(1, T_hi); a tighter default costs a few
    # extra eigensolves and keeps T_c usable at relative offsets of 1e-6
    return min(1e-8 * max(1.0, t_hi), rel * t_hi)


def critical_temperature_kernel(kernel, mu, bracket=None, rel_tol=1e-13):
    """``T_c(l)`` for a prebuilt sector kernel."""

    def f(t):
        return lowest_eigenvalue(assemble_operator(DispersionParams(mu, t), kernel))

    return _critical_from(f, bracket, rel_tol)


def _critical_from(f, bracket, rel_tol):
    lo, hi = (T_FLOOR, 1.0) if bracket is None else (float(bracket[0]), float(bracket[1]))
    if lo < 0 or hi <= lo:
        raise SpectralError("bracket must satisfy 0 <= T_lo < T_hi")
    lo = max(lo, T_FLOOR)
    if f(T_FLOOR) >= 0:
        return 0.0
    if f(lo) >= 0:
        lo, hi = T_FLOOR, lo
    hi = _expand(f, max(hi, lo))
    return _bisect(f, lo, hi, _bisect_tol(hi, rel_tol))


def critical_temperature_sector(spec, grid, mu, ell, bracket=None, kernel=None):
    """Sector critical temperature by bisection on the lowest eigenvalue.

    Returns 0 when ``K_T + V_l`` is already nonnegative at ``T = 1e-10``.

    Raises
    ------
    NoTransitionError
        If the bracket must grow beyond ``T = 1e6``.
    """
    if kernel is None:
        kernel = assemble_sector_kernels(spec, [ell], grid)[ell]
    return critical_temperature_kernel(kernel, mu, bracket)


@dataclass(frozen=True)
class CriticalReport:
    """Sector critical temperatures and the derived quantities.

    ``t_tilde`` is ``None`` (and ``flags`` says why) when ``tc == 0``.
    ``ell1`` is the sector owning the second zero crossing, ``None`` when
    that crossing does not happen above ``T = 1e-10``.
    """

    tc_by_sector: dict
    tc: float
    ell0: int
    ell1: object
    t_tilde: object
    degeneracy_at_tc: int
    ties: tuple = ()
    flags: tuple = ()
    second_tc_ell0: float = field(default=0.0)

    def to_dict(self):
        return {
            "tc_by_sector": {str(k): v for k, v in self.tc_by_sector.items()},
            "tc": self.tc,
            "ell0": self.ell0,
            "ell1": self.ell1,
            "t_tilde": self.t_tilde,
            "degeneracy_at_tc": self.degeneracy_at_tc,
            "ties": [list(t) for t in self.ties],
            "flags": list(self.flags),
            "second_tc_ell0": self.second_tc_ell0,
        }


def sector_ells(dimension, ell_max):
    ell_max = int(ell_max)
    if ell_max < 0 or ell_max % 2:
        raise SpectralError(f"ell_max must be a non-negative even integer, got {ell_max}")
    return [0] if dimension == 3 else list(range(0, ell_max + 1, 2))


def second_distinct_eigenvalue(kernels_by_ell, mu, t):
    """Second smallest value of the merged sector spectra and its owning sector."""
    params = DispersionParams(mu, t)
    pool = []
    for ell, kern in kernels_by_ell.items():
        for v in _low_values(assemble_operator(params, kern), 2):
            pool.append((float(v), ell))
    pool.sort()
    return pool[1]


def critical_report(spec, grid, mu, ell_max=12, kernels_by_ell=None, threads=1):
    """Critical temperatures of every even sector up to `ell_max`.

    ``T_tilde`` is found by bisection on the second smallest value of the
    merged sector spectra (each ``l >= 0`` represented once), which is
    nondecreasing in ``T``.
    """
    ells = sector_ells(grid.dimension, ell_max)
    if kernels_by_ell is None:
        kernels_by_ell = assemble_sector_kernels(spec, ells, grid)
    kernels_by_ell = {l: kernels_by_ell[l] for l in ells}
    tcs = ordered_map(lambda l: critical_temperature_kernel(kernels_by_ell[l], mu),
                      ells, threads)
    tc_by = dict(zip(ells, tcs))
    tc = max(tcs)
    ell0 = ells[int(np.argmax(tcs))]
    flags, ties = [], []
    for l in ells:
        if l != ell0 and tc > 0 and abs(tc_by[l] - tc) <= TIE_TOL * max(1.0, tc):
            ties.append((ell0, l))
    if ties:
        warnings.warn(f"sectors {ties} share T_c within {TIE_TOL:g}; "
                      "the at-most-twice-degenerate assumption fails",
                      DegeneracyWarning, stacklevel=2)
        flags.append("degeneracy-violation")
    degeneracy = 1 if ell0 == 0 else 2
    if tc == 0:
        flags.append("no-transition-above-floor")
        return CriticalReport(tc_by, 0.0, ell0, None, None, degeneracy, tuple(ties), tuple(flags))

    def f(t):
        return second_distinct_eigenvalue(kernels_by_ell, mu, t)[0]

    if f(T_FLOOR) >= 0:
        t_tilde, ell1 = 0.0, None
    else:
        t_tilde = _bisect(f, T_FLOOR, tc, _bisect_tol(tc, 1e-13))
        # the owner is whichever track sits at zero there
        _, ell1 = second_distinct_eigenvalue(kernels_by_ell, mu, t_tilde * (1 - 1e-9))
    second = _second_crossing(kernels_by_ell[ell0], mu, tc)
    return CriticalReport(tc_by, tc, ell0, ell1, t_tilde, degeneracy, tuple(ties),
                          tuple(flags), second)


def _second_crossing(kernel, mu, tc):
    def f(t):
        return float(_low_values(assemble_operator(DispersionParams(mu, t), kernel), 2)[-1])

    if f(T_FLOOR) >= 0:
        return 0.0
    return _bisect(f, T_FLOOR, tc, _bisect_tol(tc, 1e-13))


@dataclass(frozen=True)
class PositivityReport:
    temperature: float
    min_by_sector: dict
    global_min: float
    argmin_sector: int
    threshold: float
    passed: bool

    def to_dict(self):
        return {
            "temperature": self.temperature,
            "min_by_sector": {str(k): v for k, v in self.min_by_sector.items()},
            "global_min": self.global_min,
            "argmin_sector": self.argmin_sector,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def positivity_check(spec, grid, mu, temperature, delta, ell0, ell_max=12,
                     kernels_by_ell=None, threads=1):
    """Minimum eigenvalue of ``K_T^{Delta_l0} + V_l`` over all sectors.

    Passes iff the global minimum is ``>= -1e-6 sup|V_hat|``.  The gap
    enters only through ``|Delta|``, which is radial for any sector.
    """
    ells = sector_ells(grid.dimension, ell_max)
    if kernels_by_ell is None:
        kernels_by_ell = assemble_sector_kernels(spec, ells, grid)
    params = DispersionParams(mu, temperature)
    d = _delta_values(delta, grid)
    mins = ordered_map(
        lambda l: lowest_eigenvalue(assemble_operator(params, kernels_by_ell[l], d)),
        ells, threads)
    by = dict(zip(ells, mins))
    j = int(np.argmin(mins))
    threshold = -1e-6 * spec.vhat_sup()
    return PositivityReport(float(temperature), by, float(mins[j]), ells[j], threshold,
                            bool(mins[j] >= threshold))
