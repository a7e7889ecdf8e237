"""Pure NumPy implementations of the hot kernels.

This module is the reference fallback for :mod:`radialbcs._ckernels`.  Both
expose the same functions with the same semantics; the compiled variant loops
pair by pair in C, this one vectorizes across pairs.
"""

from functools import lru_cache

import numpy as np

BACKEND = "python"

# Gauss-Kronrod 15/7 abscissae on [-1, 1] (QUADPACK qk15), positive half.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full 15-point rule; Gauss weights are zero on the Kronrod-only nodes.
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_wg_full = np.zeros(8)
_wg_full[1::2] = _WG
GK_GAUSS = np.concatenate([_wg_full[:-1], _wg_full[::-1]])

INITIAL_PANELS = 4
CHUNK_PAIRS = 8192
MAX_BLOCK = 4_000_000
SERIES_CUTOFF = 1e-6


def radial_profile(k, gauss_amp, gauss_b, tab_k, tab_v, tab_d):
    """Evaluate a Gaussian-mixture plus cubic-Hermite radial profile at `k`."""
    k = np.asarray(k, dtype=float)
    out = np.zeros_like(k)
    k2 = k * k
    for a, b in zip(gauss_amp, gauss_b):
        out += a * np.exp(-b * k2)
    if len(tab_k) >= 2:
        inside = (k >= tab_k[0]) & (k <= tab_k[-1])
        kk = k[inside]
        j = np.clip(np.searchsorted(tab_k, kk, side="right") - 1, 0, len(tab_k) - 2)
        h = tab_k[j + 1] - tab_k[j]
        t = (kk - tab_k[j]) / h
        t2 = t * t
        t3 = t2 * t
        out[inside] += ((2 * t3 - 3 * t2 + 1) * tab_v[j]
                        + (t3 - 2 * t2 + t) * h * tab_d[j]
                        + (-2 * t3 + 3 * t2) * tab_v[j + 1]
                        + (t3 - t2) * h * tab_d[j + 1])
    return out


def angular_moments(p, q, ells, gauss_amp, gauss_b, tab_k, tab_v, tab_d,
                    dim, tol, max_level):
    """Angular projections of a radial profile for explicit (p, q) pairs.

    For ``dim == 2`` returns ``(1/pi) int_0^pi cos(l phi) f(|p - q|) dphi``;
    for ``dim == 3`` the spherical mean ``(1/2) int_{-1}^{1} f(...) dt`` (only
    ``l == 0`` is meaningful there).  Each pair is integrated with composite
    G7-K15 on ``4 * 2**level`` uniform panels, doubling until the summed
    Kronrod-Gauss difference (max over ``ells``) is below `tol`.

    Returns ``(values, levels)`` with ``values`` of shape ``(len(ells), P)``.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    ells = np.asarray(ells, dtype=float)
    npairs = p.size
    if npairs > CHUNK_PAIRS:
        parts = [angular_moments(p[i:i + CHUNK_PAIRS], q[i:i + CHUNK_PAIRS], ells,
                                 gauss_amp, gauss_b, tab_k, tab_v, tab_d,
                                 dim, tol, max_level)
                 for i in range(0, npairs, CHUNK_PAIRS)]
        return (np.concatenate([v for v, _ in parts], axis=1),
                np.concatenate([lv for _, lv in parts]))
    return _fixed_level_onwards(p, q, ells, gauss_amp, gauss_b, tab_k, tab_v, tab_d,
                                dim, tol, max_level, 0)


def _fixed_level_onwards(p, q, ells, gauss_amp, gauss_b, tab_k, tab_v, tab_d,
                         dim, tol, max_level, first_level):
    npairs = p.size
    values = np.zeros((ells.size, npairs))
    levels = np.full(npairs, -1, dtype=np.int64)
    if dim == 2:
        lo, hi, scale = 0.0, np.pi, 1.0 / np.pi
    else:
        lo, hi, scale = -1.0, 1.0, 0.5
    pending = np.arange(npairs)
    s2 = p * p + q * q
    pq = p * q
    for level in range(first_level, max_level + 1):
        if pending.size == 0:
            break
        npan = INITIAL_PANELS * 2 ** level
        width = (hi - lo) / npan
        centers = lo + width * (np.arange(npan) + 0.5)
        x = (centers[:, None] + 0.5 * width * GK_NODES[None, :]).ravel()
        if pending.size * x.size > MAX_BLOCK:
            # refine the stragglers in smaller batches
            sub = max(1, MAX_BLOCK // x.size)
            for i in range(0, pending.size, sub):
                idx = pending[i:i + sub]
                v, lv = _fixed_level_onwards(p[idx], q[idx], ells, gauss_amp, gauss_b,
                                             tab_k, tab_v, tab_d, dim, tol, max_level, level)
                values[:, idx] = v
                levels[idx] = lv
            pending = pending[:0]
            break
        if dim == 2:
            arg = s2[pending, None] - 2.0 * pq[pending, None] * np.cos(x)[None, :]
            weight = np.cos(np.outer(ells, x))
        else:
            arg = s2[pending, None] - 2.0 * pq[pending, None] * x[None, :]
            weight = np.ones((ells.size, x.size))
        f = radial_profile(np.sqrt(np.maximum(arg, 0.0)), gauss_amp, gauss_b,
                           tab_k, tab_v, tab_d)
        wk = np.tile(GK_KRONROD, npan) * (0.5 * width)
        wg = np.tile(GK_GAUSS, npan) * (0.5 * width)
        kron = f @ (weight * wk).T
        gauss = f @ (weight * wg).T
        err = np.abs(kron - gauss).max(axis=1) * scale
        done = (err <= tol) | (level == max_level)
        idx = pending[done]
        values[:, idx] = kron[done].T * scale
        levels[idx] = level
        pending = pending[~done]
    return values, levels


def level_tables(ells, dim, max_level, lo, hi):
    """Flattened composite G7-K15 tables for every refinement level.

    Returns ``(geo, wk, wg, offsets)``: the geometric factor (``cos x`` in
    2D, ``x`` in 3D) at each node, Kronrod and Gauss weights times the
    angular weight for each ``l`` (shape ``(nodes, len(ells))``), and the
    node offset of each level.  Results are cached and read-only.
    """
    key = tuple(float(l) for l in np.asarray(ells, dtype=float).ravel())
    return _level_tables(key, int(dim), int(max_level), float(lo), float(hi))


@lru_cache(maxsize=32)
def _level_tables(ells, dim, max_level, lo, hi):
    ells = np.asarray(ells, dtype=float)
    geo, wks, wgs, offsets = [], [], [], [0]
    for level in range(max_level + 1):
        npan = INITIAL_PANELS * 2 ** level
        width = (hi - lo) / npan
        centers = lo + width * (np.arange(npan) + 0.5)
        x = (centers[:, None] + 0.5 * width * GK_NODES[None, :]).ravel()
        if dim == 2:
            weight = np.cos(np.outer(ells, x))
            geo.append(np.cos(x))
        else:
            weight = np.ones((ells.size, x.size))
            geo.append(x)
        wks.append((weight * np.tile(GK_KRONROD, npan) * (0.5 * width)).T)
        wgs.append((weight * np.tile(GK_GAUSS, npan) * (0.5 * width)).T)
        offsets.append(offsets[-1] + x.size)
    out = (np.ascontiguousarray(np.concatenate(geo)),
           np.ascontiguousarray(np.concatenate(wks)),
           np.ascontiguousarray(np.concatenate(wgs)),
           np.asarray(offsets, dtype=np.int64))
    for a in out:
        a.setflags(write=False)
    return out


def kt_symbol(x, temperature):
    """``x / tanh(x / 2T)`` elementwise, with the series branch near ``x = 0``."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if temperature == 0.0:
        return ax
    t = temperature
    small = ax < SERIES_CUTOFF * t
    safe = np.where(small, 1.0, ax)
    out = safe / np.tanh(safe / (2.0 * t))
    return np.where(small, 2.0 * t + x * x / (6.0 * t), out)


def kt_delta_symbol(x, delta_abs, temperature):
    """``E / tanh(E / 2T)`` with ``E = sqrt(x**2 + delta**2)``."""
    energy = np.hypot(np.asarray(x, dtype=float), np.asarray(delta_abs, dtype=float))
    return kt_symbol(energy, temperature)
