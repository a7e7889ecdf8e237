import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import radialbcs as rb
from radialbcs.discretization import GridError, panel_boundaries


def test_polynomial_exactness(grid64):
    # every panel carries >= 2 Gauss points, so cubics are integrated exactly
    p = grid64.nodes
    assert np.sum(grid64.weights * p ** 3) == pytest.approx(8.0 ** 4 / 4, rel=1e-14)
    assert np.sum(grid64.weights) == pytest.approx(8.0, rel=1e-14)


def test_gaussian_integral_2d(grid256):
    assert grid256.integrate(np.exp(-grid256.nodes ** 2)) == pytest.approx(
        np.pi * (1 - np.exp(-64.0)), rel=1e-13)


def test_gaussian_integral_3d(grid3d):
    assert grid3d.integrate(np.exp(-grid3d.nodes ** 2)) == pytest.approx(
        np.pi ** 1.5, rel=1e-12)


def test_fermi_breakpoints():
    edges = panel_boundaries(8.0, 2.0, fermi_levels=3)
    pf = np.sqrt(2.0)
    for pt in [pf] + [pf * (1 + s * 2.0 ** -k) for k in (1, 2, 3) for s in (-1, 1)]:
        assert np.min(np.abs(edges - pt)) < 1e-15
    assert edges[0] == 0 and edges[-1] == 8.0


def test_no_fermi_panels_for_negative_mu():
    g = rb.build_grid(8.0, 64, -1.0, 2)
    assert g.scheme == "gauss-legendre-composite"
    assert g.panels.size == 9


def test_symmetrize_is_isometry(grid128, rng):
    f = rb.GridFunction(grid128, rng.standard_normal(128))
    g = rb.GridFunction(grid128, rng.standard_normal(128))
    assert rb.inner_product(f, g) == pytest.approx(f.symmetrized() @ g.symmetrized(), rel=1e-13)
    np.testing.assert_allclose(grid128.unsymmetrize(f.symmetrized()), f.values, rtol=1e-14)


def test_inner_product_conjugate_symmetric(grid64, rng):
    f = rb.GridFunction(grid64, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    g = rb.GridFunction(grid64, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    assert rb.inner_product(f, g) == pytest.approx(np.conj(rb.inner_product(g, f)))
    assert abs(rb.inner_product(f, f).imag) <= 1e-13 * rb.inner_product(f, f).real


def test_inner_product_rejects_mixed_grids(grid64, grid128):
    with pytest.raises(ValueError):
        rb.inner_product(rb.GridFunction(grid64, np.ones(64)),
                         rb.GridFunction(grid128, np.ones(128)))


def test_grid_arrays_are_read_only(grid64):
    with pytest.raises(ValueError):
        grid64.nodes[0] = 1.0


@pytest.mark.parametrize("args", [
    (0.0, 64, 1.0, 2), (8.0, 8, 1.0, 2), (1.0, 64, 1.0, 2),
    (8.0, 64, 1.0, 4), (np.inf, 64, 1.0, 2), (8.0, 16, 1.0, 2),
])
def test_invalid_grids(args):
    with pytest.raises(GridError):
        rb.build_grid(*args)


def test_grid_function_validation(grid64):
    with pytest.raises(ValueError):
        rb.GridFunction(grid64, np.ones(10))
    with pytest.raises(ValueError):
        rb.GridFunction(grid64, np.full(64, np.nan))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(64, 300), mu=st.floats(-4.0, 9.0), dim=st.sampled_from([2, 3]))
def test_grid_invariants(n, mu, dim):
    p_max = rb.default_p_max(mu)
    g = rb.build_grid(p_max, n, mu, dim)
    assert g.size == n
    assert np.all(np.diff(g.nodes) > 0) and 0 < g.nodes[0] and g.nodes[-1] < p_max
    assert np.all(g.weights > 0)
    assert np.sum(g.weights) == pytest.approx(p_max, rel=1e-13)
    assert p_max ** 2 > abs(mu)
