import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
import radialbcs as rb
from radialbcs.gap import (AdmissibilityError, BcsState, a_priori_bound, el_residual,
                           normal_state, nystrom_evaluate)
from radialbcs.potentials import SectorKernel
from radialbcs.spectral import DispersionParams

MU = 1.0


def separable_kernel(grid, g, chi):
    raw = -g * np.outer(chi, chi)
    return SectorKernel(0, grid, grid.sqrt_wm[:, None] * raw * grid.sqrt_wm[None, :], raw)


@pytest.fixture(scope="module")
def tc(report256):
    return report256.tc


@pytest.fixture(scope="module")
def k0(kernels256):
    return kernels256[0]


# -- the fixed-point map ---------------------------------------------------------

def test_linearized_map_has_unit_spectral_radius_at_tc(default_spec, k0, tc):
    params = DispersionParams(MU, tc)
    v = np.exp(-k0.grid.nodes ** 2)
    eps = 1e-9
    lam = 0.0
    for _ in range(400):
        w = rb.gap_map(default_spec, k0, params, eps * v).values / eps
        lam = np.linalg.norm(k0.grid.symmetrize(w)) / np.linalg.norm(k0.grid.symmetrize(v))
        v = w / np.max(np.abs(w))
    assert lam == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("p", [0.0, 0.5, 1.0, 1.3, 2.7])
def test_gap_map_matches_direct_convolution(default_spec, k0, p):
    """``-(2 pi)^-1 int V_hat(p - q) Delta(q) / K(q) d^2q`` by a polar tensor rule."""
    t = 0.3
    params = DispersionParams(MU, t)
    profile = lambda q: 0.3 * np.exp(-q ** 2)
    got = nystrom_evaluate(default_spec, k0, params, profile(k0.grid.nodes), p)[0]
    x, w = np.polynomial.legendre.leggauss(400)
    q = 4.0 * (x + 1)
    wq = 4.0 * w * q
    m = 256
    phi = 2 * np.pi * np.arange(m) / m
    dist = np.sqrt(p * p + q[:, None] ** 2 - 2 * p * q[:, None] * np.cos(phi))
    vhat = -2.0 * np.exp(-dist ** 2 / 2)
    f = profile(q) / O.kt(np.hypot(q ** 2 - MU, profile(q)), t)
    ref = -(wq * f) @ vhat.sum(axis=1) * (2 * np.pi / m) / (2 * np.pi)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-12)


# -- solver against oracles --------------------------------------------------------

@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("t", [0.05, 0.1, 0.2])
def test_separable_kernel_scalar_oracle(dim, t):
    grid = rb.build_grid(8.0, 256, MU, dim)
    x, w = O.gauss_grid(8.0, 256, MU)
    g = 3.0 if dim == 2 else 8.0
    chi = np.exp(-x ** 2)
    a = O.scalar_separable_gap(g, chi, x, w, MU, t, dim)
    assert a > 0
    sol = rb.solve_gap(rb.PotentialSpec.gaussian(g, dimension=dim),
                       separable_kernel(grid, g, chi), DispersionParams(MU, t))
    assert sol.converged
    np.testing.assert_allclose(sol.values.values, a * chi, rtol=0, atol=1e-8)


def test_separable_kernel_above_tc_is_trivial():
    grid = rb.build_grid(8.0, 128, MU, 2)
    x, w = O.gauss_grid(8.0, 128, MU)
    chi = np.exp(-x ** 2)
    assert O.scalar_separable_gap(3.0, chi, x, w, MU, 2.0) == 0.0
    sol = rb.solve_gap(rb.PotentialSpec.gaussian(3.0), separable_kernel(grid, 3.0, chi),
                       DispersionParams(MU, 2.0))
    assert sol.converged and sol.node_sup_norm() < 1e-9


def test_unique_nontrivial_solution(default_spec, k0, tc, rng):
    params = DispersionParams(MU, 0.5 * tc)
    ref = rb.solve_gap(default_spec, k0, params)
    for _ in range(10):
        init = rng.uniform(0.05, 3.0) * np.exp(-k0.grid.nodes ** 2 * rng.uniform(0.2, 2.0))
        sol = rb.solve_gap(default_spec, k0, params, init=init)
        assert sol.converged
        np.testing.assert_allclose(np.abs(sol.values.values), np.abs(ref.values.values),
                                   atol=1e-8)


def test_newton_and_picard_agree(default_spec, k0, tc):
    params = DispersionParams(MU, 0.6 * tc)
    a = rb.solve_gap(default_spec, k0, params, method="newton", tol=1e-11)
    b = rb.solve_gap(default_spec, k0, params, method="picard", tol=1e-11)
    assert a.converged and b.converged
    np.testing.assert_allclose(a.values.values, b.values.values, atol=1e-9)
    assert a.iterations < b.iterations


def test_gap_vanishes_above_and_opens_below(default_spec, k0, tc):
    above = rb.solve_gap(default_spec, k0, DispersionParams(MU, 1.2 * tc))
    below = rb.solve_gap(default_spec, k0, DispersionParams(MU, 0.8 * tc))
    assert above.converged and above.sup_norm() < 1e-9
    assert below.converged and below.sup_norm() > 0.1
    assert el_residual(k0, DispersionParams(MU, 0.8 * tc), below.values) < 1e-9


def test_gap_decreases_with_temperature(default_spec, k0, tc):
    sups = [rb.solve_gap(default_spec, k0, DispersionParams(MU, f * tc)).sup_norm()
            for f in (0.2, 0.5, 0.8, 0.95)]
    assert all(a > b for a, b in zip(sups, sups[1:]))
    assert sups[0] ** 2 <= a_priori_bound(default_spec, MU)


def test_continuous_sup_dominates_nodes(default_spec, k0, tc):
    sol = rb.solve_gap(default_spec, k0, DispersionParams(MU, 0.5 * tc))
    assert sol.sup_norm() >= sol.node_sup_norm()
    at0 = abs(nystrom_evaluate(default_spec, k0, DispersionParams(MU, 0.5 * tc),
                               sol.values.values, 0.0)[0])
    assert sol.sup_norm() >= at0 - 1e-15
    # the interpolant reproduces the nodal values of a converged solution
    at_nodes = nystrom_evaluate(default_spec, k0, DispersionParams(MU, 0.5 * tc),
                                sol.values.values, k0.grid.nodes)
    np.testing.assert_allclose(at_nodes, sol.values.values, atol=1e-9)


def test_3d_gap(spec3d, kernel3d):
    tc = rb.spectral.critical_temperature_kernel(kernel3d, MU)
    sol = rb.solve_gap(spec3d, kernel3d, DispersionParams(MU, 0.5 * tc))
    assert sol.converged and sol.sup_norm() > 0
    assert el_residual(kernel3d, DispersionParams(MU, 0.5 * tc), sol.values) < 1e-9


@pytest.mark.parametrize("kwargs", [dict(mixing=0.0), dict(mixing=1.5), dict(method="bfgs"),
                                    dict(init=np.ones(3))])
def test_solver_argument_errors(default_spec, k0, kwargs):
    with pytest.raises(ValueError):
        rb.solve_gap(default_spec, k0, DispersionParams(MU, 0.1), **kwargs)


def test_solver_rejects_zero_temperature(default_spec, k0):
    with pytest.raises(ValueError):
        rb.solve_gap(default_spec, k0, DispersionParams(MU, 0.0))


# -- states and free energy ---------------------------------------------------------

def test_normal_state(grid128):
    params = DispersionParams(MU, 0.2)
    st_ = normal_state(grid128, params)
    x = grid128.nodes ** 2 - MU
    np.testing.assert_allclose(st_.gamma.values, 1 / (1 + np.exp(x / 0.2)), rtol=1e-14)
    assert not np.any(st_.sigma.values)
    cold = normal_state(grid128, DispersionParams(MU, 0.0))
    np.testing.assert_array_equal(cold.gamma.values, (x < 0).astype(float))


def test_state_identities(default_spec, k0, tc):
    params = DispersionParams(MU, 0.5 * tc)
    gap = rb.solve_gap(default_spec, k0, params)
    s = rb.construct_state(gap, params)
    d = gap.values.values
    x = k0.grid.nodes ** 2 - MU
    k = rb.kt_delta_symbol(params, k0.grid.nodes, d)
    np.testing.assert_allclose(s.sigma.values, -d / (2 * k), atol=1e-15)
    np.testing.assert_allclose(s.gamma.values, 0.5 - x / (2 * k), atol=1e-15)
    # eigenvalues of the shell density are Fermi factors of +-E
    e = np.hypot(x, d)
    lo = 0.5 - np.hypot(s.gamma.values - 0.5, s.sigma.values)
    np.testing.assert_allclose(lo, 1 / (1 + np.exp(e / params.temperature)), atol=1e-14)
    # the zero gap gives the normal state
    zero = rb.GapFunction(0, params.temperature, rb.GridFunction(k0.grid, np.zeros(256)),
                          True, 0, 0.0, "newton", ())
    np.testing.assert_allclose(rb.construct_state(zero, params).gamma.values,
                               normal_state(k0.grid, params).gamma.values, atol=1e-15)


def test_inadmissible_state_rejected(grid64):
    with pytest.raises(AdmissibilityError):
        BcsState.from_arrays(grid64, np.full(64, 0.5), np.full(64, 0.6))


def test_interaction_term_matches_brute_force(default_spec, grid64):
    zero = rb.assemble_sector_kernel(rb.PotentialSpec.gaussian(0.0), 0, grid64)
    kern = rb.assemble_sector_kernel(default_spec, 0, grid64)
    params = DispersionParams(MU, 0.3)
    sig = lambda p: 0.1 * np.exp(-p ** 2)
    state = BcsState.from_arrays(grid64, np.full(64, 0.5), sig(grid64.nodes))
    diff = (rb.free_energy_relative(state, default_spec, kern, params)
            - rb.free_energy_relative(state, default_spec, zero, params))
    ref = O.brute_force_bilinear_2d([2.0], [1.0], sig, sig, grid64.p_max) / (2 * np.pi)
    assert diff == pytest.approx(ref, rel=1e-6)


def test_free_energy_of_gap_state_increases_to_zero(default_spec, k0, tc):
    vals = []
    for f in (0.3, 0.6, 0.9, 0.99):
        params = DispersionParams(MU, f * tc)
        vals.append(rb.free_energy_relative(
            rb.construct_state(rb.solve_gap(default_spec, k0, params), params),
            default_spec, k0, params))
    assert all(v < 0 for v in vals)
    assert all(a < b for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), scale=st.floats(1e-3, 0.2), factor=st.floats(1.0, 2.0))
def test_normal_state_minimizes_above_tc(seed, scale, factor):
    """Random admissible states with ``sigma != 0`` cost free energy for ``T >= T_c``."""
    grid, kern, tc = _small_setup()
    params = DispersionParams(MU, factor * tc)
    rng = np.random.default_rng(seed)
    g0 = normal_state(grid, params).gamma.values
    room = 0.25 - (g0 - 0.5) ** 2
    g = g0 + scale * room * rng.uniform(-1, 1, grid.size)
    s = scale * room * rng.uniform(-1, 1, grid.size)
    state = BcsState.from_arrays(grid, g, s)
    assert rb.free_energy_relative(state, None, kern, params) > 0


_SETUP = {}


def _small_setup():
    if not _SETUP:
        grid = rb.build_grid(8.0, 96, MU, 2)
        kern = rb.assemble_sector_kernel(rb.PotentialSpec.gaussian(2.0), 0, grid)
        _SETUP["v"] = (grid, kern, rb.spectral.critical_temperature_kernel(kern, MU))
    return _SETUP["v"]
