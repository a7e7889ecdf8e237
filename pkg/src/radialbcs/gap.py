"""Sector gap equation, the Euler-Lagrange state, and relative free energy.

With ``sigma = -Delta / (2 K_T^Delta)`` the gap equation ``Delta = 2 V_l sigma``
becomes the fixed point ``Delta = G(Delta)``,

    G(Delta)(p) = -(2 pi)^(-d/2) int V_hat_l(p, q) Delta(q) / K_T^Delta(q) dq,

where ``dq`` is the radial measure on R^d.  In 2D this is the familiar
``Delta_l(p) = (1/pi) int_{R^2} V_hat_l(p, q) sigma_l(q) dq``.  The
Euler-Lagrange residual is ``(K_T^Delta + V_l) sigma = (G(Delta) - Delta) / 2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.special import expit

from .discretization import GridFunction
from .potentials import angular_moments
from .spectral import (DispersionParams, assemble_operator, kt_delta_symbol,
                       lowest_eigenvalues)

log = logging.getLogger(__name__)

METHODS = ("newton", "picard")
# below T_c a Newton result this small is the trivial root
TRIVIAL_TOL = 1e-6


class GapError(RuntimeError):
    """The fixed-point iteration produced non-finite values."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class AdmissibilityError(ValueError):
    """A state violates ``0 <= Gamma <= 1``."""


@dataclass(frozen=True, eq=False)
class GapFunction:
    """A (possibly unconverged) solution of the sector gap equation."""

    ell: int
    temperature: float
    values: GridFunction
    converged: bool
    iterations: int
    residual: float
    method: str = "newton"
    trace: tuple = field(default=(), repr=False)
    continuous_sup: object = None

    @property
    def grid(self):
        return self.values.grid

    def sup_norm(self):
        """``sup_p |Delta(p)|`` of the Nystrom interpolant when known, else over nodes."""
        if self.continuous_sup is not None:
            return self.continuous_sup
        return self.values.sup_norm()

    def node_sup_norm(self):
        return self.values.sup_norm()


def _phase_normalize(grid, mu, delta):
    j = grid.nearest_index(np.sqrt(max(mu, 0.0)))
    ref = delta[j]
    if ref == 0.0:
        ref = delta[int(np.argmax(np.abs(delta)))]
    return -delta if ref < 0 else delta


def _kdelta(params, grid, delta):
    return kt_delta_symbol(params, grid.nodes, np.abs(delta))


def _apply_v(kernel, f):
    return kernel.apply(f)


def _g(kernel, params, delta):
    return -_apply_v(kernel, delta / _kdelta(params, kernel.grid, delta))


def gap_map(spec, kernel, params, delta):
    """One application of the fixed-point map ``G``."""
    del spec  # the kernel already carries the interaction
    if params.temperature <= 0:
        raise ValueError("gap_map needs T > 0")
    values = delta.values if isinstance(delta, GridFunction) else np.asarray(delta, dtype=float)
    if isinstance(delta, GridFunction) and delta.grid is not kernel.grid:
        raise ValueError("delta lives on a different grid than the kernel")
    return GridFunction(kernel.grid, _g(kernel, params, values))


def nystrom_evaluate(spec, kernel, params, delta, p):
    """``Delta(p) = G(Delta)(p)`` at arbitrary momenta (the natural interpolant)."""
    grid = kernel.grid
    delta = np.asarray(getattr(delta, "values", delta), dtype=float)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    q = grid.nodes
    v = angular_moments(spec, [kernel.ell], np.repeat(p, q.size), np.tile(q, p.size))
    v = v.reshape(p.size, q.size)
    f = grid.weights * grid.measure * delta / _kdelta(params, grid, delta)
    return -(2.0 * np.pi) ** (-grid.dimension / 2.0) * (v @ f)


def continuous_sup(spec, kernel, params, delta):
    """``sup_p |Delta(p)|`` over ``[0, p_max]`` via the Nystrom interpolant.

    The maximum over nodes alone is only second-order accurate when the peak
    falls between nodes (for example at ``p = 0``).
    """
    grid = kernel.grid
    delta = np.asarray(getattr(delta, "values", delta), dtype=float)
    if not np.any(delta):
        return 0.0
    pts = np.concatenate([[0.0], grid.nodes, [grid.p_max]])
    vals = np.abs(nystrom_evaluate(spec, kernel, params, delta, pts))
    j = int(np.argmax(vals))
    lo, hi = pts[max(j - 1, 0)], pts[min(j + 1, pts.size - 1)]
    res = optimize.minimize_scalar(
        lambda x: -abs(nystrom_evaluate(spec, kernel, params, delta, x)[0]),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * max(1.0, hi)})
    return float(max(vals[j], -res.fun))


def el_residual(kernel, params, delta):
    """Discrete ``L^2(R^d)`` norm of ``(K_T^Delta + V_l) sigma``."""
    grid = kernel.grid
    delta = np.asarray(getattr(delta, "values", delta), dtype=float)
    k = _kdelta(params, grid, delta)
    sigma = -delta / (2.0 * k)
    r = k * sigma + _apply_v(kernel, sigma)
    return float(np.linalg.norm(grid.symmetrize(r)))


def _dk_denergy(energy, t):
    """Derivative of ``E / tanh(E / 2T)`` with respect to ``E``."""
    x = energy / t
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    # (sinh x - x) / (2 sinh^2(x/2)) written with e^{-x} to avoid overflow
    em = np.exp(-xs)
    num = 0.5 * (1.0 - em * em) - xs * em
    den = 0.5 * (1.0 - em) ** 2
    big = num / den
    return np.where(small, x / 3.0, big)


def _jacobian(kernel, params, delta):
    grid = kernel.grid
    t = params.temperature
    x = grid.nodes ** 2 - params.mu
    energy = np.hypot(x, delta)
    k = kt_delta_symbol(params, grid.nodes, np.abs(delta))
    safe = np.where(energy > 0, energy, 1.0)
    dratio = 1.0 / k - delta * _dk_denergy(energy, t) * (delta / safe) / (k * k)
    scale = (2.0 * np.pi) ** (-grid.dimension / 2.0)
    v = scale * kernel.raw_values * (grid.weights * grid.measure)[None, :]
    return np.eye(grid.size) + v * dratio[None, :]


def default_init(kernel, params, amplitude):
    """``amplitude`` times the lowest eigenvector of ``K_T + V_l`` as a gap profile.

    The eigenvector ``phi`` approximates ``sigma``; the matching gap shape is
    ``K_T phi`` (from ``Delta = -2 K_T sigma`` at small amplitude).
    """
    grid = kernel.grid
    _, vec = lowest_eigenvalues(assemble_operator(params, kernel), 1)
    phi = grid.unsymmetrize(vec[:, 0])
    shape = -_kdelta(params, grid, np.zeros(grid.size)) * phi
    shape = _phase_normalize(grid, params.mu, shape)
    return amplitude * shape / np.max(np.abs(shape))


def energy_scale(spec, params):
    return max(spec.vhat_sup(), abs(params.mu), params.temperature, 1e-300)


def solve_gap(spec, kernel, params, init=None, mixing=0.5, tol=1e-9, max_iter=10_000,
              method="newton"):
    """Solve ``Delta = G(Delta)`` in one sector.

    ``method="picard"`` runs the damped iteration
    ``Delta <- (1 - m) Delta + m G(Delta)``, halving ``m`` (at most four
    times) whenever the residual grows.  ``method="newton"`` (default) takes
    Newton steps on ``Delta - G(Delta)`` with backtracking and falls back to a
    damped step when Newton stalls; below the sector critical temperature it
    refuses steps that collapse onto the trivial solution, and restarts from
    the default initial gap if a supplied `init` still converges to it.

    Non-convergence is reported through ``converged=False``.

    Raises
    ------
    GapError
        If the iteration produces non-finite values.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if params.temperature <= 0:
        raise ValueError("solve_gap needs T > 0")
    if not 0 < mixing <= 1:
        raise ValueError("mixing must lie in (0, 1]")
    grid = kernel.grid
    # starting above the branch, Newton descends onto it monotonically
    amp = max(0.1 * energy_scale(spec, params), np.sqrt(a_priori_bound(spec, params.mu)))
    if init is None:
        delta = default_init(kernel, params, amp)
    else:
        delta = np.array(getattr(init, "values", init), dtype=float)
        if delta.shape != (grid.size,):
            raise ValueError("init has the wrong length for the kernel grid")
    runner = _newton if method == "newton" else _picard
    delta, it, res, trace = runner(kernel, params, delta, mixing, tol, max_iter)
    if np.max(np.abs(delta)) <= TRIVIAL_TOL * energy_scale(spec, params):
        below_tc = lowest_eigenvalues(assemble_operator(params, kernel), 1)[0][0] < 0
        if not below_tc and res <= tol:
            # K_T + V_l >= 0: zero is the only solution, so report it exactly
            delta = np.zeros(grid.size)
        elif below_tc and init is not None and method == "newton":
            # a user init drifted onto Delta = 0 below T_c: retry from above the branch
            delta, it2, res, trace2 = runner(kernel, params, default_init(kernel, params, amp),
                                             mixing, tol, max_iter)
            it += it2
            trace = list(trace) + list(trace2)
    delta = _phase_normalize(grid, params.mu, delta)
    converged = bool(res <= tol)
    if not converged:
        log.warning("gap iteration (ell=%s, T=%g) stopped at residual %.3e after %d steps",
                    kernel.ell, params.temperature, res, it)
    sup = continuous_sup(spec, kernel, params, delta) if np.all(np.isfinite(delta)) else None
    return GapFunction(kernel.ell, float(params.temperature), GridFunction(grid, delta),
                       converged, it, float(res), method, tuple(trace), sup)


def _residual(kernel, params, delta):
    r = delta - _g(kernel, params, delta)
    if not np.all(np.isfinite(r)):
        return r, np.inf
    return r, float(np.max(np.abs(r)))


def _damped_step(kernel, params, delta, r, res, mixing):
    m = mixing
    for _ in range(5):
        trial = delta - m * r
        rt, rest = _residual(kernel, params, trial)
        if rest < res:
            return trial, rt, rest
        m *= 0.5
    return trial, rt, rest


def _picard(kernel, params, delta, mixing, tol, max_iter):
    r, res = _residual(kernel, params, delta)
    trace = [res]
    it = 0
    m = mixing
    halvings = 0
    while res > tol and it < max_iter:
        trial = (1 - m) * delta + m * (delta - r)
        if not np.all(np.isfinite(trial)):
            raise GapError("non-finite gap during damped iteration", trace)
        rt, rest = _residual(kernel, params, trial)
        it += 1
        if rest > res and halvings < 4:
            m *= 0.5
            halvings += 1
            continue
        delta, r, res = trial, rt, rest
        trace.append(res)
        if not np.isfinite(res):
            raise GapError("non-finite residual during damped iteration", trace)
    return delta, it, res, trace


def _newton(kernel, params, delta, mixing, tol, max_iter):
    below_tc = lowest_eigenvalues(assemble_operator(params, kernel), 1)[0][0] < 0
    r, res = _residual(kernel, params, delta)
    if not np.isfinite(res):
        raise GapError("non-finite residual at the initial gap", [res])
    trace = [res]
    it = 0
    last_step = np.inf
    # the residual is flat along the critical direction near T_c, so a small
    # residual alone does not pin the amplitude; also require a small step
    while (res > tol or last_step > tol) and it < max_iter:
        it += 1
        amp = np.max(np.abs(delta))
        try:
            step = linalg.solve(_jacobian(kernel, params, delta), r)
        except (linalg.LinAlgError, ValueError):
            step = None
        accepted = False
        if step is not None and np.all(np.isfinite(step)):
            t = 1.0
            for _ in range(30):
                trial = delta - t * step
                if below_tc and np.max(np.abs(trial)) < 0.5 * amp:
                    t *= 0.5
                    continue
                rt, rest = _residual(kernel, params, trial)
                if rest < res or (rest <= tol):
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            trial, rt, rest = _damped_step(kernel, params, delta, r, res, mixing)
        if not np.isfinite(rest):
            raise GapError("non-finite residual during Newton iteration", trace)
        if rest >= res and not accepted:
            # neither route improves: the residual is at its floor
            trace.append(rest)
            break
        last_step = float(np.max(np.abs(trial - delta)))
        delta, r, res = trial, rt, rest
        trace.append(res)
    return delta, it, res, trace


@dataclass(frozen=True, eq=False)
class BcsState:
    """Per-shell 2x2 state ``Gamma = [[gamma, sigma], [sigma, 1 - gamma]]``.

    ``energy`` caches ``E(p) = sqrt((p^2 - mu)^2 + Delta(p)^2)`` when the
    state comes from a gap function.
    """

    gamma: GridFunction
    sigma: GridFunction
    ell: int
    temperature: float
    energy: object = None

    def __post_init__(self):
        g = self.gamma.values
        s = self.sigma.values
        if self.gamma.grid is not self.sigma.grid:
            raise AdmissibilityError("gamma and sigma live on different grids")
        lo, hi = _eigs(g, s)
        if np.any(lo < -1e-12) or np.any(hi > 1 + 1e-12):
            raise AdmissibilityError("state has 2x2 eigenvalues outside [0, 1]")

    @property
    def grid(self):
        return self.gamma.grid

    @classmethod
    def from_arrays(cls, grid, gamma, sigma, ell=0, temperature=0.0):
        return cls(GridFunction(grid, gamma), GridFunction(grid, sigma), ell, temperature)


def _eigs(gamma, sigma):
    r = np.hypot(gamma - 0.5, sigma)
    return 0.5 - r, 0.5 + r


def normal_state(grid, params, ell=0):
    """``gamma_0 = (1 + exp((p^2 - mu) / T))^-1``, ``sigma = 0``."""
    x = grid.nodes ** 2 - params.mu
    if params.temperature == 0:
        g0 = np.where(x < 0, 1.0, np.where(x > 0, 0.0, 0.5))
    else:
        g0 = expit(-x / params.temperature)
    return BcsState.from_arrays(grid, g0, np.zeros(grid.size), ell, params.temperature)


def _gamma_matrix(x, delta, t):
    """``(1 + exp(H / T))^-1`` per node from an explicit 2x2 eigendecomposition."""
    h = np.empty((x.size, 2, 2))
    h[:, 0, 0] = x
    h[:, 1, 1] = -x
    h[:, 0, 1] = delta
    h[:, 1, 0] = delta
    w, u = np.linalg.eigh(h)
    f = expit(-w / t)
    return np.einsum("nij,nj,nkj->nik", u, f, u)


def construct_state(delta, params, check=True):
    """Euler-Lagrange state of a gap function.

    ``gamma = 1/2 - (p^2 - mu) / (2 K_T^Delta)``, ``sigma = -Delta / (2 K_T^Delta)``,
    cross-checked against ``(1 + exp(H_Delta / T))^-1`` at every node.
    """
    t = params.temperature
    if t <= 0:
        raise ValueError("construct_state needs T > 0")
    grid = delta.grid
    d = delta.values.values
    x = grid.nodes ** 2 - params.mu
    k = kt_delta_symbol(params, grid.nodes, np.abs(d))
    gamma = 0.5 - x / (2.0 * k)
    sigma = -d / (2.0 * k)
    if check:
        gm = _gamma_matrix(x, d, t)
        err = max(np.max(np.abs(gm[:, 0, 0] - gamma)), np.max(np.abs(gm[:, 0, 1] - sigma)))
        if err > 1e-12:
            raise FloatingPointError(f"closed-form state disagrees with matrix formula by {err:.3e}")
    return BcsState(GridFunction(grid, gamma), GridFunction(grid, sigma), delta.ell, t,
                    np.hypot(x, d))


def _entropy_density(gamma, sigma):
    lo, hi = _eigs(gamma, sigma)
    lo = np.clip(lo, 0.0, 1.0)
    hi = np.clip(hi, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(lo > 0, lo * np.log(lo), 0.0)
        b = np.where(hi > 0, hi * np.log(hi), 0.0)
    return -(a + b)


def free_energy_relative(state, spec, kernel, params):
    """``F(state) - F(normal state)`` at the same ``(T, mu)``.

    Kinetic ``int (p^2 - mu)(gamma - gamma_0)``, interaction
    ``(2 pi)^(-d/2) int int sigma V_hat_l sigma``, and ``-T`` times the
    entropy ``-(lambda_+ ln lambda_+ + lambda_- ln lambda_-)`` of the 2x2
    shell density.
    """
    del spec
    grid = state.grid
    if kernel.grid is not grid:
        raise ValueError("state and kernel live on different grids")
    g0 = normal_state(grid, params, state.ell).gamma.values
    g = state.gamma.values
    s = state.sigma.values
    wm = grid.weights * grid.measure
    x = grid.nodes ** 2 - params.mu
    kinetic = np.sum(wm * x * (g - g0))
    u = grid.symmetrize(s)
    interaction = u @ (kernel.operator @ u)
    entropy = np.sum(wm * (_entropy_density(g, s) - _entropy_density(g0, 0.0 * g0)))
    return float(kinetic + interaction - params.temperature * entropy)


def a_priori_bound(spec, mu):
    """Right side of ``||Delta||_inf^2 <= ||V||_2^4 pi^4 / 32 + mu^2``."""
    return spec.l2_norm() ** 4 * np.pi ** 4 / 32.0 + mu * mu


__all__ = [
    "GapError", "AdmissibilityError", "GapFunction", "BcsState", "gap_map",
    "solve_gap", "construct_state", "free_energy_relative", "normal_state",
    "el_residual", "a_priori_bound", "nystrom_evaluate", "continuous_sup", "default_init", "DispersionParams",
]
