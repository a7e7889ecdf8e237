"""Radial quadrature grids and measure-symmetrized coordinates.

Radial functions on R^d are sampled at composite Gauss-Legendre nodes on
``(0, p_max)``.  Integrals over R^d use the radial measure density
``2 pi p`` (d = 2) or ``4 pi p**2`` (d = 3).  The map

    v_i = sqrt(w_i * mu(p_i)) * f(p_i)

sends a sampled function to coordinates in which the discrete L^2(R^d) inner
product is the Euclidean one, so integral operators become symmetric
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("gauss-legendre-composite", "gauss-legendre-panels-at-fermi")


class GridError(ValueError):
    """Invalid grid construction parameters."""


def measure_density(p, dimension):
    """Radial measure density: ``2 pi p`` in 2D, ``4 pi p**2`` in 3D."""
    p = np.asarray(p, dtype=float)
    if dimension == 2:
        return 2.0 * np.pi * p
    if dimension == 3:
        return 4.0 * np.pi * p * p
    raise GridError(f"dimension must be 2 or 3, got {dimension}")


def default_p_max(mu, length_scale=1.0):
    """Momentum cutoff ``max(8, 4 sqrt(|mu| + 1)) / length_scale``."""
    return max(8.0, 4.0 * np.sqrt(abs(mu) + 1.0)) / length_scale


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Composite Gauss-Legendre grid on ``(0, p_max)``.

    Attributes
    ----------
    nodes, weights : ndarray
        Strictly increasing interior nodes and positive weights for ``dr``.
    p_max : float
    dimension : int
        2 or 3; fixes the radial measure density.
    scheme : str
    panels : ndarray
        Panel boundaries, ``panels[0] == 0`` and ``panels[-1] == p_max``.
    """

    nodes: np.ndarray
    weights: np.ndarray
    p_max: float
    dimension: int
    scheme: str
    panels: np.ndarray
    measure: np.ndarray = field(init=False, repr=False)
    sqrt_wm: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(self.nodes))
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "panels", _readonly(self.panels))
        if self.dimension not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.scheme not in SCHEMES:
            raise GridError(f"unknown scheme {self.scheme!r}")
        n = self.nodes
        if n.ndim != 1 or n.size != self.weights.size:
            raise GridError("nodes and weights must be 1-D arrays of equal length")
        if np.any(np.diff(n) <= 0) or n[0] <= 0 or n[-1] >= self.p_max:
            raise GridError("nodes must be strictly increasing inside (0, p_max)")
        if np.any(self.weights <= 0):
            raise GridError("weights must be positive")
        mu = measure_density(n, self.dimension)
        object.__setattr__(self, "measure", _readonly(mu))
        object.__setattr__(self, "sqrt_wm", _readonly(np.sqrt(self.weights * mu)))

    @property
    def size(self):
        return self.nodes.size

    def __len__(self):
        return self.nodes.size

    def integrate(self, values):
        """Integral over R^d of a radial function sampled at the nodes."""
        return float(np.sum(self.weights * self.measure * np.asarray(values)))

    def symmetrize(self, values):
        """Sampled values -> measure-symmetrized coordinates."""
        return self.sqrt_wm * np.asarray(values)

    def unsymmetrize(self, coords):
        """Inverse of :meth:`symmetrize`."""
        return np.asarray(coords) / self.sqrt_wm

    def nearest_index(self, p):
        return int(np.argmin(np.abs(self.nodes - p)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a radial profile on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def symmetrized(self):
        return self.grid.symmetrize(self.values)

    def sup_norm(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def _fermi_boundaries(mu, levels):
    if mu <= 0:
        return []
    pf = np.sqrt(mu)
    pts = [pf]
    for k in range(1, levels + 1):
        pts += [pf * (1 - 2.0 ** -k), pf * (1 + 2.0 ** -k)]
    return sorted(pts)


def panel_boundaries(p_max, mu, fermi_levels=4, outer_width=1.0):
    """Panel edges: Fermi-surface refinement plus roughly uniform outer panels."""
    inner = _fermi_boundaries(mu, fermi_levels)
    edges = [0.0] + [b for b in inner if 0 < b < p_max]
    start = edges[-1]
    span = p_max - start
    n_outer = max(1, int(np.ceil(span / outer_width - 1e-12)))
    edges += list(start + span * np.arange(1, n_outer + 1) / n_outer)
    edges[-1] = p_max
    return np.array(edges)


def build_grid(p_max, n_points, mu, dimension, fermi_levels=4, outer_width=1.0):
    """Composite Gauss-Legendre grid on ``(0, p_max)``.

    When ``mu > 0`` the Fermi radius ``sqrt(mu)`` and the points
    ``sqrt(mu) * (1 +- 2**-k)``, ``k = 1..fermi_levels``, are panel
    boundaries.  Nodes are shared evenly among panels (the remainder goes to
    the panels nearest the Fermi radius).

    Raises
    ------
    GridError
        If ``p_max <= 0``, ``n_points < 16``, or ``p_max**2 <= |mu|``.
    """
    p_max = float(p_max)
    n_points = int(n_points)
    if not np.isfinite(p_max) or p_max <= 0:
        raise GridError("p_max must be positive and finite")
    if n_points < 16:
        raise GridError("n_points must be at least 16")
    if p_max ** 2 <= abs(mu):
        raise GridError("grid must enclose Fermi surface (p_max**2 > |mu|)")
    if dimension not in (2, 3):
        raise GridError(f"dimension must be 2 or 3, got {dimension}")
    edges = panel_boundaries(p_max, mu, fermi_levels, outer_width)
    npan = edges.size - 1
    if n_points < 2 * npan:
        raise GridError(f"n_points={n_points} too small for {npan} panels")
    counts = np.full(npan, n_points // npan)
    extra = n_points - counts.sum()
    if extra:
        centers = 0.5 * (edges[:-1] + edges[1:])
        ref = np.sqrt(mu) if mu > 0 else 0.0
        order = np.argsort(np.abs(centers - ref), kind="stable")
        counts[order[:extra]] += 1
    nodes, weights = [], []
    for a, b, m in zip(edges[:-1], edges[1:], counts):
        x, w = np.polynomial.legendre.leggauss(int(m))
        nodes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        weights.append(0.5 * (b - a) * w)
    scheme = SCHEMES[1] if mu > 0 else SCHEMES[0]
    return RadialGrid(np.concatenate(nodes), np.concatenate(weights), p_max,
                      int(dimension), scheme, edges)


def inner_product(f, g):
    """Discrete L^2(R^d) pairing ``sum_i w_i mu(p_i) conj(f_i) g_i``."""
    if f.grid is not g.grid:
        raise ValueError("grid functions live on different grids")
    grid = f.grid
    val = np.sum(grid.weights * grid.measure * np.conj(f.values) * g.values)
    return complex(val) if np.iscomplexobj(val) else float(val)
