"""Radial pair potentials, their Fourier transforms, and sector kernels.

Fourier convention is symmetric throughout::

    V_hat(k) = (2 pi)^(-d/2) int_{R^d} V(x) exp(-i k.x) dx

so that the gap equation reads ``Delta = 2 (2 pi)^(-d/2) V_hat * alpha_hat``.

Built-in analytic kinds are sums of Gaussians,
``V(x) = -sum_m lambda_m exp(-|x|^2 / (2 s_m^2))`` (positive ``lambda`` is
attractive), with ``V_hat(k) = -sum_m lambda_m s_m^d exp(-s_m^2 k^2 / 2)``.
Tabulated potentials give ``V(r)`` on a radius grid; the transform is a
Hankel integral of the monotone cubic interpolant, tabulated in momentum
together with its exact derivative and evaluated by cubic Hermite
interpolation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import j0, j1, spherical_jn

from ._backend import kernels
from .discretization import RadialGrid

KINDS = ("gaussian", "two-gaussian", "tabulated")

ANGULAR_TOL = 1e-12
# piecewise-cubic profiles are only C1, so Gauss-Kronrod converges slowly;
# this is still far below the transform-table error (~1e-6)
TABULATED_ANGULAR_TOL = 1e-10
ANGULAR_MAX_LEVEL = 10


class PotentialError(ValueError):
    """Invalid potential specification or sector request."""


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A radial pair potential in 2 or 3 dimensions.

    Parameters
    ----------
    kind : {"gaussian", "two-gaussian", "tabulated"}
    dimension : int
    strengths, ranges : tuple of float
        Gaussian amplitudes ``lambda_m`` and widths ``s_m`` (one entry for
        ``gaussian``, two for ``two-gaussian``, empty for ``tabulated``).
    radii, values : tuple of float
        Tabulated ``V(r)``; zero beyond the last radius.
    k_max, n_k : float, int
        Momentum table used for the transform of a tabulated potential.
    """

    kind: str
    dimension: int = 2
    strengths: tuple = ()
    ranges: tuple = ()
    radii: tuple = ()
    values: tuple = ()
    k_max: float = 40.0
    n_k: int = 2049
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PotentialError(f"unknown potential kind {self.kind!r}")
        if self.dimension not in (2, 3):
            raise PotentialError(f"dimension must be 2 or 3, got {self.dimension}")
        object.__setattr__(self, "strengths", tuple(float(x) for x in self.strengths))
        object.__setattr__(self, "ranges", tuple(float(x) for x in self.ranges))
        object.__setattr__(self, "radii", tuple(float(x) for x in self.radii))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        expected = {"gaussian": 1, "two-gaussian": 2, "tabulated": 0}[self.kind]
        if len(self.strengths) != expected or len(self.ranges) != expected:
            raise PotentialError(
                f"{self.kind} needs {expected} strength(s) and range(s)")
        if not all(np.isfinite(self.strengths)):
            raise PotentialError("strengths must be finite")
        if any(not np.isfinite(s) or s <= 0 for s in self.ranges):
            raise PotentialError("range parameters must be strictly positive")
        if self.kind == "tabulated":
            r = np.asarray(self.radii)
            v = np.asarray(self.values)
            if r.size < 2 or r.size != v.size:
                raise PotentialError("tabulated potential needs >= 2 (radius, value) rows")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise PotentialError("tabulated radii must be non-negative and strictly increasing")
            if not np.all(np.isfinite(v)):
                raise PotentialError("tabulated values must be finite")
        elif self.radii or self.values:
            raise PotentialError("radii/values only apply to tabulated potentials")

    # -- constructors -------------------------------------------------------
    @classmethod
    def gaussian(cls, strength, width=1.0, dimension=2):
        return cls("gaussian", dimension, (strength,), (width,))

    @classmethod
    def two_gaussian(cls, strengths, widths, dimension=2):
        return cls("two-gaussian", dimension, tuple(strengths), tuple(widths))

    @classmethod
    def from_table(cls, radii, values, dimension=2, **kwargs):
        return cls("tabulated", dimension, radii=tuple(radii), values=tuple(values), **kwargs)

    def scaled(self, factor):
        """Same shape, interaction multiplied by `factor`."""
        if self.kind == "tabulated":
            return PotentialSpec("tabulated", self.dimension, radii=self.radii,
                                 values=tuple(factor * v for v in self.values),
                                 k_max=self.k_max, n_k=self.n_k)
        return PotentialSpec(self.kind, self.dimension,
                             tuple(factor * s for s in self.strengths), self.ranges)

    def with_dimension(self, dimension):
        if self.kind == "tabulated":
            return PotentialSpec("tabulated", dimension, radii=self.radii,
                                 values=self.values, k_max=self.k_max, n_k=self.n_k)
        return PotentialSpec(self.kind, dimension, self.strengths, self.ranges)

    # -- profile used by the kernels ---------------------------------------
    @property
    def is_zero(self):
        if self.kind == "tabulated":
            return not any(self.values)
        return not any(self.strengths)

    def profile_arrays(self):
        """``(gauss_amp, gauss_b, tab_k, tab_v, tab_d)`` describing ``V_hat``."""
        d = self.dimension
        if self.kind == "tabulated":
            k, v, dv = self._transform_table
            return np.zeros(0), np.zeros(0), k, v, dv
        amp = np.array([-lam * s ** d for lam, s in zip(self.strengths, self.ranges)])
        b = np.array([0.5 * s * s for s in self.ranges])
        return amp, b, np.zeros(0), np.zeros(0), np.zeros(0)

    @cached_property
    def _real_space(self):
        return PchipInterpolator(np.asarray(self.radii), np.asarray(self.values),
                                 extrapolate=False)

    def potential(self, r):
        """Real-space ``V(r)``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "tabulated":
            r0 = self.radii[0]
            out = self._real_space(np.maximum(r, r0))
            return np.where(r > self.radii[-1], 0.0, np.nan_to_num(out))
        out = np.zeros_like(r)
        for lam, s in zip(self.strengths, self.ranges):
            out -= lam * np.exp(-r * r / (2 * s * s))
        return out

    @cached_property
    def _transform_table(self):
        """Momentum table of ``V_hat`` and its exact derivative for cubic Hermite use."""
        k = np.linspace(0.0, self.k_max, self.n_k)
        r_nodes, r_weights = _table_quadrature(np.asarray(self.radii), self.k_max)
        wv = r_weights * self.potential(r_nodes)
        vk, dvk = _hankel(k, r_nodes, wv, self.dimension)
        if self.radii[0] > 0:
            # flat extension of V below the first radius
            x, w = np.polynomial.legendre.leggauss(24)
            rr = 0.5 * self.radii[0] * (x + 1)
            ww = 0.5 * self.radii[0] * w * self.values[0]
            v0, d0 = _hankel(k, rr, ww, self.dimension)
            vk, dvk = vk + v0, dvk + d0
        return k, vk, dvk

    # -- norms ----------------------------------------------------------------
    def l2_norm(self):
        """Real-space ``||V||_2`` over R^d."""
        d = self.dimension
        if self.kind == "tabulated":
            nodes, weights = _table_quadrature(np.asarray(self.radii), 0.0)
            meas = 2 * np.pi * nodes if d == 2 else 4 * np.pi * nodes ** 2
            total = np.sum(weights * meas * self.potential(nodes) ** 2)
            if self.radii[0] > 0:
                r0 = self.radii[0]
                total += self.values[0] ** 2 * (np.pi * r0 ** 2 if d == 2 else 4 * np.pi * r0 ** 3 / 3)
            return float(np.sqrt(total))
        total = 0.0
        for lm, sm in zip(self.strengths, self.ranges):
            for ln, sn in zip(self.strengths, self.ranges):
                c2 = 1.0 / (1.0 / sm ** 2 + 1.0 / sn ** 2)
                total += lm * ln * (2.0 * np.pi * c2) ** (d / 2)
        return float(np.sqrt(max(total, 0.0)))

    def vhat_sup(self):
        """``sup_k |V_hat(k)|`` (sampled on a fine momentum mesh)."""
        if "sup" not in self._cache:
            if self.kind == "tabulated":
                self._cache["sup"] = float(np.max(np.abs(self._transform_table[1])))
            else:
                smin = min(self.ranges)
                k = np.linspace(0.0, 12.0 / smin, 4001)
                self._cache["sup"] = float(np.max(np.abs(fourier_hat(self, k))))
        return self._cache["sup"]


def _hankel(k, r, weighted_v, dimension):
    """Radial Fourier transform ``sum_j w_j V_j f(k r_j)`` and its k-derivative."""
    kr = np.outer(k, r)
    if dimension == 2:
        f = j0(kr) * r
        df = -j1(kr) * r * r
    else:
        c = np.sqrt(2.0 / np.pi)
        f = c * spherical_jn(0, kr) * r ** 2
        df = -c * spherical_jn(1, kr) * r ** 3
    return f @ weighted_v, df @ weighted_v


def _table_quadrature(radii, k_max, order=8):
    """Gauss-Legendre nodes on each table interval.

    Intervals are split so that ``k_max r`` advances by at most 2 per piece;
    the interpolant is cubic there, so 8 points integrate it against the
    Bessel kernel to near machine precision.
    """
    nodes, weights = [], []
    x, w = np.polynomial.legendre.leggauss(order)
    for a, b in zip(radii[:-1], radii[1:]):
        nsub = max(1, int(np.ceil((b - a) * k_max / 2.0)))
        edges = np.linspace(a, b, nsub + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def load_table(path):
    """Read a two-column ``radius,value`` CSV (header row optional)."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise PotentialError(f"{path}:{i + 1}: expected 2 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows or i > 0:
                    raise PotentialError(f"{path}:{i + 1}: non-numeric row {row!r}") from None
    if not rows:
        raise PotentialError(f"{path}: no data rows")
    r, v = zip(*rows)
    return np.array(r), np.array(v)


def fourier_hat(spec, p):
    """``V_hat(p)`` for scalar or array momenta ``p >= 0``.

    Analytic kinds use the closed form; tabulated kinds interpolate the
    momentum table and return 0 beyond it.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise PotentialError("momentum must be finite")
    if np.any(arr < 0):
        raise PotentialError("momentum magnitude must be non-negative")
    out = kernels.radial_profile(arr, *spec.profile_arrays())
    return float(out) if np.ndim(p) == 0 else out


def check_sector(spec, ell):
    ell = int(ell)
    if spec.dimension == 2 and ell % 2:
        raise PotentialError(f"2D sectors need even angular momentum, got {ell}")
    if spec.dimension == 3 and ell != 0:
        raise PotentialError("3D support is limited to the s-wave sector (ell = 0)")
    return ell


def angular_moments(spec, ells, p, q, tol=None):
    """``V_hat_l(p_i, q_i)`` for each ``l`` in `ells`; shape ``(len(ells), P)``."""
    ells = [abs(check_sector(spec, l)) for l in ells]
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(~np.isfinite(p)) or np.any(~np.isfinite(q)) or np.any(p < 0) or np.any(q < 0):
        raise PotentialError("momenta must be finite and non-negative")
    if spec.is_zero:
        return np.zeros((len(ells), p.size))
    if tol is None:
        tol = TABULATED_ANGULAR_TOL if spec.kind == "tabulated" else ANGULAR_TOL
    vals, _ = kernels.angular_moments(p, q, np.array(ells, dtype=float),
                                      *spec.profile_arrays(), spec.dimension,
                                      tol, ANGULAR_MAX_LEVEL)
    origin = (p * q) == 0
    if np.any(origin):
        for a, ell in enumerate(ells):
            if ell:
                vals[a, origin] = 0.0
    return vals


def angular_kernel(spec, ell, p, q):
    """``V_hat_l(p, q) = (2 pi)^-1 int_0^{2 pi} e^{-i l phi} V_hat(|p - q|) dphi``.

    In 3D only ``l = 0`` is admitted and the angular average is the spherical
    mean ``(1/2) int_{-1}^{1} V_hat(sqrt(p^2 + q^2 - 2pqt)) dt``.
    """
    return float(angular_moments(spec, [ell], [p], [q])[0, 0])


@dataclass(frozen=True, eq=False)
class SectorKernel:
    """Discretized ``V_hat_l`` on a radial grid.

    ``matrix[i, j] = sqrt(w_i mu_i) V_hat_l(p_i, p_j) sqrt(w_j mu_j)`` is the
    measure-symmetrized form of ``int int sigma(p) V_hat_l(p, q) sigma(q) dp dq``.
    The interaction operator on the sector, ``(2 pi)^(-d/2)`` times the
    integral against ``V_hat_l``, is :attr:`operator`.
    """

    ell: int
    grid: RadialGrid
    matrix: np.ndarray
    raw_values: np.ndarray

    def __post_init__(self):
        for name in ("matrix", "raw_values"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def dimension(self):
        return self.grid.dimension

    @cached_property
    def operator(self):
        op = (2.0 * np.pi) ** (-self.grid.dimension / 2.0) * self.matrix
        op.setflags(write=False)
        return op

    def apply(self, values):
        """``(V_l f)(p_i) = (2 pi)^(-d/2) sum_j V_hat_l(p_i, p_j) w_j mu_j f_j``."""
        g = self.grid
        return (2.0 * np.pi) ** (-g.dimension / 2.0) * (
            self.raw_values @ (g.weights * g.measure * np.asarray(values)))


def assemble_sector_kernels(spec, ells, grid):
    """Sector kernels for several angular momenta sharing one quadrature pass."""
    if spec.dimension != grid.dimension:
        raise PotentialError("potential and grid dimensions differ")
    ells = [check_sector(spec, l) for l in ells]
    n = grid.size
    iu, ju = np.triu_indices(n)
    vals = angular_moments(spec, ells, grid.nodes[iu], grid.nodes[ju])
    out = {}
    for a, ell in enumerate(ells):
        raw = np.empty((n, n))
        raw[iu, ju] = vals[a]
        raw[ju, iu] = vals[a]
        s = grid.sqrt_wm
        m = s[:, None] * raw * s[None, :]
        out[ell] = SectorKernel(ell, grid, 0.5 * (m + m.T), raw)
    return out


def assemble_sector_kernel(spec, ell, grid):
    """Measure-symmetrized kernel matrix of ``V_hat_l`` on `grid`."""
    return assemble_sector_kernels(spec, [ell], grid)[check_sector(spec, ell)]
