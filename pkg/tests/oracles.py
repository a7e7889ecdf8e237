"""Independent reference computations used by the tests.

Nothing here imports the package's assembly, quadrature, or solver code: the
kernels come from closed forms (modified Bessel functions), grids are built
directly from ``leggauss``, and eigenvalues from ``numpy.linalg``.
"""

import numpy as np
from scipy import optimize
from scipy.special import ive


def gauss_grid(p_max, n, mu, fermi_levels=4, outer_width=1.0):
    """Composite Gauss-Legendre nodes with Fermi-radius breakpoints (own construction)."""
    edges = [0.0]
    if mu > 0:
        pf = np.sqrt(mu)
        inner = sorted([pf] + [pf * (1 + s * 2.0 ** -k) for k in range(1, fermi_levels + 1)
                               for s in (-1, 1)])
        edges += [e for e in inner if e < p_max]
    start = edges[-1]
    m = int(np.ceil((p_max - start) / outer_width - 1e-12))
    edges += [start + (p_max - start) * (j + 1) / m for j in range(m)]
    edges = np.array(edges)
    npan = edges.size - 1
    counts = np.full(npan, n // npan)
    centers = 0.5 * (edges[1:] + edges[:-1])
    ref = np.sqrt(mu) if mu > 0 else 0.0
    counts[np.argsort(np.abs(centers - ref), kind="stable")[: n - counts.sum()]] += 1
    xs, ws = [], []
    for a, b, c in zip(edges[:-1], edges[1:], counts):
        x, w = np.polynomial.legendre.leggauss(int(c))
        xs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(xs), np.concatenate(ws)


def gaussian_sector_kernel(strengths, widths, ell, p, q, dim=2):
    """Closed-form ``V_hat_l(p, q)`` for ``V = -sum lambda exp(-r^2 / 2 s^2)``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = 0.0
    for lam, s in zip(strengths, widths):
        s2 = s * s
        if dim == 2:
            # e^{-s^2 (p^2+q^2)/2} I_l(s^2 p q) = e^{-s^2 (p-q)^2 / 2} ive(l, s^2 p q)
            out = out - lam * s2 * np.exp(-0.5 * s2 * (p - q) ** 2) * ive(ell, s2 * p * q)
        else:
            z = s2 * p * q
            with np.errstate(invalid="ignore", divide="ignore"):
                shell = (np.exp(-0.5 * s2 * (p - q) ** 2) - np.exp(-0.5 * s2 * (p + q) ** 2)) / (2 * z)
            shell = np.where(z < 1e-12, np.exp(-0.5 * s2 * (p * p + q * q)), shell)
            out = out - lam * s ** 3 * shell
    return out


def kt(x, t):
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = x / np.tanh(x / (2 * t))
    return np.where(np.abs(x) < 1e-12, 2 * t, v)


def sector_matrix(strengths, widths, ell, mu, t, nodes, weights, dim=2, delta=None):
    """Symmetrized ``K_T^Delta + V_l`` assembled by the independent route."""
    meas = 2 * np.pi * nodes if dim == 2 else 4 * np.pi * nodes ** 2
    s = np.sqrt(weights * meas)
    v = gaussian_sector_kernel(strengths, widths, ell, nodes[:, None], nodes[None, :], dim)
    x = nodes ** 2 - mu
    e = np.abs(x) if delta is None else np.hypot(x, delta)
    return np.diag(kt(e, t)) + (2 * np.pi) ** (-dim / 2) * s[:, None] * v * s[None, :]


def lowest(a):
    return np.linalg.eigvalsh(a)[0]


def tmesh_scan(f, t_max, coarse=1e-2, fine=1e-4):
    """First mesh temperature (step `fine`) where the nondecreasing `f` is >= 0.

    A coarse pass brackets the sign change; the fine pass walks the whole
    bracket at the stated step.  Returns 0 if ``f(fine) >= 0``.
    """
    if f(fine) >= 0:
        return 0.0
    t = coarse
    while f(t) < 0:
        t += coarse
        if t > t_max:
            raise RuntimeError("no sign change below t_max")
    mesh = np.arange(max(fine, t - coarse), t + fine / 2, fine)
    for tm in mesh:
        if f(tm) >= 0:
            return float(tm)
    return float(t)


def brute_force_bilinear_2d(strengths, widths, f, g, p_max, n_r=160, n_phi=128):
    """``int int f(|p|) V_hat(p - q) g(|q|) d^2p d^2q`` by a dense polar tensor rule.

    Only ``l = 0`` radial test functions; the relative angle is integrated with
    the periodic trapezoid rule, which converges spectrally.
    """
    x, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * p_max * (x + 1)
    wr = 0.5 * p_max * w * r
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    dist = np.sqrt(r[:, None, None] ** 2 + r[None, :, None] ** 2
                   - 2 * r[:, None, None] * r[None, :, None] * np.cos(phi)[None, None, :])
    vhat = 0.0
    for lam, s in zip(strengths, widths):
        vhat = vhat - lam * s * s * np.exp(-0.5 * s * s * dist ** 2)
    ang = vhat.sum(axis=2) * (2 * np.pi / n_phi) * 2 * np.pi
    return float((wr * f(r)) @ ang @ (wr * g(r)))


def fourier_2d_numeric(v, k, r_max=12.0, n=400):
    """``(2 pi)^-1 int_{R^2} V(x) e^{-i k.x} dx`` for radial `V` by a polar tensor rule."""
    x, w = np.polynomial.legendre.leggauss(n)
    r = 0.5 * r_max * (x + 1)
    wr = 0.5 * r_max * w * r
    m = 256
    th = 2 * np.pi * np.arange(m) / m
    integrand = v(r)[:, None] * np.cos(k * r[:, None] * np.cos(th)[None, :])
    return float((wr @ integrand).sum() * (2 * np.pi / m) / (2 * np.pi))


def scalar_separable_gap(g, chi, nodes, weights, mu, t, dim=2):
    """Amplitude ``a`` of ``Delta = a chi`` for ``V_hat_l = -g chi(p) chi(q)``.

    Then ``G(a chi) = a chi * g c int chi^2 / K^{a chi}`` with ``c = (2 pi)^(-d/2)``,
    so the nontrivial root solves ``1 = g c int chi^2 / K_T^{a chi}``.
    """
    meas = 2 * np.pi * nodes if dim == 2 else 4 * np.pi * nodes ** 2
    c = (2 * np.pi) ** (-dim / 2)
    x = nodes ** 2 - mu

    def h(a):
        return g * c * np.sum(weights * meas * chi ** 2 / kt(np.hypot(x, a * chi), t)) - 1.0

    if h(0.0) <= 0:
        return 0.0
    hi = 1.0
    while h(hi) > 0:
        hi *= 2
    return optimize.brentq(h, 0.0, hi, xtol=1e-15, rtol=1e-15)
