"""Eigenvalue curves, the near-critical scaling fit, weak coupling, and the rotation test."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._backend import kernels
from ._parallel import ordered_map
from .gap import solve_gap
from .potentials import angular_moments, assemble_sector_kernels, fourier_hat
from .spectral import (DispersionParams, _bisect, _low_values, assemble_operator,
                       critical_temperature_kernel, kt_delta_symbol, sector_ells)


class AnalysisError(ValueError):
    """Invalid input or too little data for an analysis routine."""


@dataclass(frozen=True, eq=False)
class CurveSet:
    """Lowest eigenvalues of ``K_T + V_l`` per sector across a temperature mesh.

    ``tracks[(ell, index)]`` is aligned with ``temperatures``; ``crossings``
    holds ``(T, ell, index)`` sorted by descending ``T``.
    """

    temperatures: np.ndarray
    tracks: dict
    crossings: list

    def rows(self):
        for (ell, idx), track in sorted(self.tracks.items()):
            for t, v in zip(self.temperatures, track):
                yield t, ell, idx, v


def eigenvalue_curves(spec, grid, mu, ell_max, t_mesh, n_tracks=3, kernels_by_ell=None,
                      threads=1):
    """Figure-style eigenvalue tracks, index-matched after sorting.

    Zero crossings between neighbouring mesh points are refined by bisection.
    """
    t_mesh = np.asarray(t_mesh, dtype=float)
    if t_mesh.ndim != 1 or t_mesh.size < 2:
        raise AnalysisError("temperature mesh needs at least two points")
    if np.any(t_mesh <= 0) or np.any(np.diff(t_mesh) <= 0):
        raise AnalysisError("temperature mesh must be positive and strictly ascending")
    ells = sector_ells(grid.dimension, ell_max)
    if kernels_by_ell is None:
        kernels_by_ell = assemble_sector_kernels(spec, ells, grid)

    def sweep(ell):
        kern = kernels_by_ell[ell]
        vals = np.array([_low_values(assemble_operator(DispersionParams(mu, t), kern), n_tracks)
                         for t in t_mesh])
        found = []
        for idx in range(vals.shape[1]):
            col = vals[:, idx]
            for j in np.nonzero((col[:-1] < 0) & (col[1:] >= 0))[0]:
                def f(t, idx=idx):
                    return float(_low_values(assemble_operator(DispersionParams(mu, t), kern),
                                             idx + 1)[idx])
                tol = 1e-13 * t_mesh[j + 1]
                found.append((_bisect(f, t_mesh[j], t_mesh[j + 1], tol), ell, idx))
        return vals, found

    results = ordered_map(sweep, ells, threads)
    tracks, crossings = {}, []
    for ell, (vals, found) in zip(ells, results):
        for idx in range(vals.shape[1]):
            tracks[(ell, idx)] = vals[:, idx]
        crossings.extend(found)
    crossings.sort(key=lambda c: (-c[0], c[1], c[2]))
    return CurveSet(t_mesh, tracks, crossings)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    alpha_slope: float
    alpha_intercept: float
    alpha_r2: float
    tc: float
    ks: tuple
    temperatures: tuple
    sup_norms: tuple
    alpha_norms: tuple
    excluded: tuple = ()

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def scaling_fit(spec, kernel, params_base, k_range=range(3, 9), tc=None, tol=1e-9,
                gaps_out=None):
    """Least-squares exponent of ``||Delta||_inf`` against ``T_c - T``.

    Temperatures are ``T_c (1 - 2^-k)``; points closer to ``T_c`` than
    ``1e-3 T_c`` are excluded, as are unconverged solves (with a warning).
    Also fits ``log ||alpha_hat||_2``.
    """
    mu = params_base.mu
    if tc is None:
        tc = critical_temperature_kernel(kernel, mu)
    if tc <= 0:
        raise AnalysisError("no transition: T_c = 0")
    ks, temps, sups, alphas, excluded = [], [], [], [], []
    grid = kernel.grid
    for k in k_range:
        eps = 2.0 ** (-k)
        if eps < 1e-3:
            excluded.append((k, "inside critical window"))
            continue
        t = tc * (1.0 - eps)
        params = DispersionParams(mu, t)
        gap = solve_gap(spec, kernel, params, tol=tol)
        if gaps_out is not None:
            gaps_out.append(gap)
        if not gap.converged:
            warnings.warn(f"gap at T = {t:g} did not converge; excluded from fit")
            excluded.append((k, "not converged"))
            continue
        d = gap.values.values
        sigma = -d / (2.0 * kt_delta_symbol(params, grid.nodes, np.abs(d)))
        ks.append(k)
        temps.append(t)
        sups.append(gap.sup_norm())
        alphas.append(float(np.linalg.norm(grid.symmetrize(sigma))))
    if len(ks) < 4:
        raise AnalysisError(f"only {len(ks)} usable points; need at least 4")
    x = np.log(tc - np.array(temps))
    fit = stats.linregress(x, np.log(sups))
    afit = stats.linregress(x, np.log(alphas))
    return ScalingFit(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                      float(afit.slope), float(afit.intercept), float(afit.rvalue ** 2),
                      float(tc), tuple(ks), tuple(temps), tuple(sups), tuple(alphas),
                      tuple(excluded))


@dataclass(frozen=True)
class WeakCouplingReport:
    predicted_ell0: int
    diagonal: dict
    ties: tuple

    def to_dict(self):
        return {"predicted_ell0": self.predicted_ell0,
                "diagonal": {str(k): v for k, v in self.diagonal.items()},
                "ties": [list(t) for t in self.ties]}


def weak_coupling_sector(spec, mu, lambda_scale=1.0, ell_max=12, tie_tol=1e-12):
    """Leading-order sector from ``V_hat`` on the Fermi sphere.

    For radial ``V_hat`` the Fermi-circle matrix is diagonal in ``e^{i l phi}``
    with entries ``V_hat_l(sqrt mu, sqrt mu)``; the predicted sector is the
    even ``l`` minimizing it.
    """
    if mu <= 0:
        raise AnalysisError("weak-coupling prediction needs mu > 0 (a Fermi surface)")
    scaled = spec.scaled(lambda_scale)
    ells = sector_ells(spec.dimension, ell_max)
    pf = np.sqrt(mu)
    vals = angular_moments(scaled, ells, [pf], [pf])[:, 0]
    diag = {l: float(v) for l, v in zip(ells, vals)}
    j = int(np.argmin(vals))
    scale = max(1.0, float(np.max(np.abs(vals))))
    ties = tuple((ells[j], l) for l in ells
                 if l != ells[j] and abs(diag[l] - vals[j]) <= tie_tol * scale)
    return WeakCouplingReport(ells[j], diag, ties)


def fermi_circle_matrix(spec, mu, n_max, n_angles=256):
    """``<psi_n, V_hat psi_m>`` on the Fermi circle by direct double quadrature.

    ``psi_n = e^{i n theta}`` with the normalization that the diagonal equals
    ``V_hat_n(sqrt mu, sqrt mu)``.  The periodic trapezoidal rule is spectrally
    accurate here.
    """
    if spec.dimension != 2:
        raise AnalysisError("the Fermi-circle matrix is a 2D object")
    if mu <= 0:
        raise AnalysisError("needs mu > 0")
    th = 2.0 * np.pi * np.arange(n_angles) / n_angles
    pf = np.sqrt(mu)
    dist = pf * np.abs(np.exp(1j * th)[:, None] - np.exp(1j * th)[None, :])
    v = fourier_hat(spec, dist)
    ns = np.arange(-n_max, n_max + 1)
    e = np.exp(1j * np.outer(th, ns))
    return (e.conj().T @ v @ e) / n_angles ** 2, ns


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Tensor grid: radial Gauss nodes times ``n_phi`` uniform angles on ``[0, 2 pi)``."""

    radial: object
    n_phi: int

    @property
    def angles(self):
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def cell_weights(self):
        g = self.radial
        return (g.weights * g.nodes)[:, None] * np.full(self.n_phi, 2.0 * np.pi / self.n_phi)[None, :]


@dataclass(frozen=True, eq=False)
class RotationTestReport:
    angles: np.ndarray
    values: np.ndarray
    kinetic_values: np.ndarray
    interaction_value: float
    baseline: float
    min_angle: float
    min_value: float
    variation: float
    strictly_lower: bool
    degenerate: bool

    def to_dict(self):
        return {"angles": self.angles.tolist(), "values": self.values.tolist(),
                "kinetic_values": self.kinetic_values.tolist(),
                "interaction_value": self.interaction_value, "baseline": self.baseline,
                "min_angle": self.min_angle, "min_value": self.min_value,
                "variation": self.variation, "strictly_lower": self.strictly_lower,
                "degenerate": self.degenerate}


NOISE_FLOOR = 1e-10


def rotation_test(delta_2d, polar, params, spec):
    """Quadratic form of ``K_T^Delta + V`` on rotated copies of ``alpha``.

    ``alpha_hat = -Delta / (2 K_T^Delta)`` is rotated by index shifts on the
    uniform angle grid (exact rotations by ``2 pi j / n_phi``) while
    ``K_T^Delta`` stays fixed.  The ``V`` part is rotation invariant and is
    evaluated once through the angular Fourier modes of ``alpha``.
    """
    if spec.dimension != 2:
        raise AnalysisError("the rotation test is two-dimensional")
    delta_2d = np.asarray(delta_2d, dtype=float)
    g = polar.radial
    if delta_2d.shape != (g.size, polar.n_phi):
        raise AnalysisError(f"delta must have shape {(g.size, polar.n_phi)}")
    p = g.nodes[:, None]
    kd = kt_delta_symbol(params, np.broadcast_to(p, delta_2d.shape), np.abs(delta_2d))
    alpha = -delta_2d / (2.0 * kd)
    var = float(np.max(np.var(delta_2d, axis=1)))
    degenerate = var < 1e-10
    if degenerate:
        warnings.warn("radial input: the rotation test is vacuous")
    w = polar.cell_weights
    kin = np.array([np.sum(w * kd * np.roll(alpha, j, axis=1) ** 2)
                    for j in range(polar.n_phi)])
    inter = _interaction_form(alpha, polar, spec)
    values = kin + inter
    j = int(np.argmin(values))
    baseline = float(values[0])
    variation = float(kin.max() - kin.min())
    lower = bool(kin[j] < kin[0] - NOISE_FLOOR * max(1.0, abs(kin[0])))
    return RotationTestReport(polar.angles, values, kin, float(inter), baseline,
                              float(polar.angles[j]), float(values[j]), variation,
                              lower, degenerate)


def _interaction_form(alpha, polar, spec):
    """``<alpha, V alpha> = (2 pi)^-1 sum_l int int a_l V_hat_l a_l`` over angular modes."""
    g = polar.radial
    n = polar.n_phi
    modes = np.fft.fft(alpha, axis=1) / n
    ells = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    uniq = sorted(set(abs(int(l)) for l in ells))
    iu, ju = np.triu_indices(g.size)
    vals, _ = kernels.angular_moments(g.nodes[iu], g.nodes[ju], np.array(uniq, dtype=float),
                                      *spec.profile_arrays(), 2, 1e-12, 10)
    total = 0.0
    # each mode contributes with the same measure-symmetrized kernel as a sector
    for a, l in enumerate(uniq):
        raw = np.empty((g.size, g.size))
        raw[iu, ju] = vals[a]
        raw[ju, iu] = vals[a]
        m = g.sqrt_wm[:, None] * raw * g.sqrt_wm[None, :]
        for col in np.nonzero(np.abs(ells) == l)[0]:
            u = g.sqrt_wm * modes[:, col]
            total += float(np.real(np.conj(u) @ m @ u))
    return total / (2.0 * np.pi)


def symbol_bounds(params, tc, grid, delta):
    """Pointwise differences behind the operator bounds on the grid nodes.

    Returns ``(gap_excess, thermal_excess)`` with
    ``gap_excess = K_T^Delta - K_T`` and ``thermal_excess = K_{T_c} - K_T``.
    """
    d = np.abs(np.asarray(getattr(delta, "values", delta), dtype=float))
    p = grid.nodes
    kt = kt_delta_symbol(params, p, 0.0 * d)
    kd = kt_delta_symbol(params, p, d)
    kc = kt_delta_symbol(params.at(tc), p, 0.0 * d)
    return kd - kt, kc - kt
