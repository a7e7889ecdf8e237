# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contract as :mod:`radialbcs._pykernels`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, exp, fabs, sqrt, M_PI

# the symbols are evaluated on grid-sized arrays only; NumPy's vectorized tanh
# beats a scalar libm loop there, so both backends share one implementation
from radialbcs._pykernels import kt_delta_symbol, kt_symbol, level_tables  # noqa: F401

cnp.import_array()

BACKEND = "cython"


cdef struct Profile:
    const double* ga
    const double* gb
    Py_ssize_t ng
    const double* tk
    const double* tv
    const double* td
    Py_ssize_t nt


cdef inline double _profile(double k, Profile* pr) noexcept nogil:
    cdef Py_ssize_t m, lo, hi, mid
    cdef double out = 0.0, h, t, t2, t3
    cdef double k2 = k * k
    for m in range(pr.ng):
        out += pr.ga[m] * exp(-pr.gb[m] * k2)
    if pr.nt >= 2 and k >= pr.tk[0] and k <= pr.tk[pr.nt - 1]:
        lo = 0
        hi = pr.nt - 1
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if pr.tk[mid] <= k:
                lo = mid
            else:
                hi = mid
        h = pr.tk[lo + 1] - pr.tk[lo]
        t = (k - pr.tk[lo]) / h
        t2 = t * t
        t3 = t2 * t
        out += ((2 * t3 - 3 * t2 + 1) * pr.tv[lo] + (t3 - 2 * t2 + t) * h * pr.td[lo]
                + (-2 * t3 + 3 * t2) * pr.tv[lo + 1] + (t3 - t2) * h * pr.td[lo + 1])
    return out


cdef class _ProfileData:
    """Owns contiguous copies of the profile arrays for pointer access."""
    cdef object arrays
    cdef Profile prof

    def __init__(self, gauss_amp, gauss_b, tab_k, tab_v, tab_d):
        self.arrays = [np.ascontiguousarray(a, dtype=np.float64).ravel()
                       for a in (gauss_amp, gauss_b, tab_k, tab_v, tab_d)]
        cdef double[::1] ga = self.arrays[0]
        cdef double[::1] gb = self.arrays[1]
        cdef double[::1] tk = self.arrays[2]
        cdef double[::1] tv = self.arrays[3]
        cdef double[::1] td = self.arrays[4]
        if ga.shape[0] != gb.shape[0] or tk.shape[0] != tv.shape[0] or tk.shape[0] != td.shape[0]:
            raise ValueError("inconsistent profile array lengths")
        self.prof.ng = ga.shape[0]
        self.prof.nt = tk.shape[0]
        self.prof.ga = &ga[0] if ga.shape[0] else NULL
        self.prof.gb = &gb[0] if gb.shape[0] else NULL
        self.prof.tk = &tk[0] if tk.shape[0] else NULL
        self.prof.tv = &tv[0] if tv.shape[0] else NULL
        self.prof.td = &td[0] if td.shape[0] else NULL


def radial_profile(k, gauss_amp, gauss_b, tab_k, tab_v, tab_d):
    cdef const double[::1] kk = np.array(k, dtype=np.float64).ravel()
    cdef _ProfileData data = _ProfileData(gauss_amp, gauss_b, tab_k, tab_v, tab_d)
    cdef Profile* pr = &data.prof
    out = np.empty(kk.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(kk.shape[0]):
            o[i] = _profile(kk[i], pr)
    return out.reshape(np.shape(k))


_TRANSPOSED = {}


def _transposed(ells, dim, max_level, lo, hi, wk, wg):
    key = (tuple(ells.tolist()), dim, max_level, lo, hi)
    hit = _TRANSPOSED.get(key)
    if hit is None:
        if len(_TRANSPOSED) > 32:
            _TRANSPOSED.clear()
        hit = (np.ascontiguousarray(wk.T), np.ascontiguousarray(wg.T))
        _TRANSPOSED[key] = hit
    return hit


def angular_moments(p, q, ells, gauss_amp, gauss_b, tab_k, tab_v, tab_d,
                    int dim, double tol, int max_level):
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64).ravel()
    cdef const double[::1] qq = np.ascontiguousarray(q, dtype=np.float64).ravel()
    ell_arr = np.ascontiguousarray(ells, dtype=np.float64).ravel()
    cdef _ProfileData data = _ProfileData(gauss_amp, gauss_b, tab_k, tab_v, tab_d)
    cdef Profile* pr = &data.prof
    cdef double lo, hi, scale
    if dim == 2:
        lo, hi, scale = 0.0, M_PI, 1.0 / M_PI
    else:
        lo, hi, scale = -1.0, 1.0, 0.5
    geo_arr, wk_arr, wg_arr, off_arr = level_tables(ell_arr, dim, max_level, lo, hi)
    cdef const double[::1] geo = geo_arr
    # (len(ells), nodes) so each moment is a contiguous dot product
    wk_t, wg_t = _transposed(ell_arr, dim, max_level, lo, hi, wk_arr, wg_arr)
    cdef const double[:, ::1] wk = wk_t
    cdef const double[:, ::1] wg = wg_t
    cdef const long long[::1] off = off_arr.astype(np.longlong)
    cdef Py_ssize_t npairs = pp.shape[0], nl = ell_arr.shape[0]
    values_arr = np.zeros((nl, npairs))
    levels_arr = np.full(npairs, -1, dtype=np.int64)
    cdef double[:, ::1] values = values_arr
    cdef long long[::1] levels = levels_arr
    fbuf_arr = np.empty(off_arr[-1] - off_arr[-2])
    cdef double[::1] fbuf = fbuf_arr
    kron_arr = np.empty(nl)
    cdef double[::1] kron = kron_arr
    cdef double s2, pq, c, err, gs, ks
    cdef Py_ssize_t i, j, a, level, start, n
    with nogil:
        for i in range(npairs):
            s2 = pp[i] * pp[i] + qq[i] * qq[i]
            pq = pp[i] * qq[i]
            for level in range(max_level + 1):
                start = off[level]
                n = off[level + 1] - start
                for j in range(n):
                    c = s2 - 2.0 * pq * geo[start + j]
                    fbuf[j] = _profile(sqrt(c) if c > 0.0 else 0.0, pr)
                err = 0.0
                for a in range(nl):
                    ks = 0.0
                    gs = 0.0
                    for j in range(n):
                        ks = ks + fbuf[j] * wk[a, start + j]
                        gs = gs + fbuf[j] * wg[a, start + j]
                    kron[a] = ks
                    if fabs(ks - gs) * scale > err:
                        err = fabs(ks - gs) * scale
                if err <= tol or level == max_level:
                    for a in range(nl):
                        values[a, i] = kron[a] * scale
                    levels[i] = level
                    break
    return values_arr, levels_arr
