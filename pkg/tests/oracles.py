"""Reference values for f = |x|^2 / 2 on the unit disk, computed by 1D
quadrature and shooting.  Nothing here imports the package under test."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq


def _inner(s, eps):
    # int_0^s t exp(-t^2 / (2 eps)) dt
    v, _ = quad(lambda t: t * math.exp(-t * t / (2 * eps)), 0.0, s, epsabs=0.0, epsrel=1e-13)
    return v


def radial_mean_exit(r, eps):
    """u(r) = (1/eps) int_r^1 exp(s^2/2eps)/s int_0^s t exp(-t^2/2eps) dt ds."""
    v, _ = quad(
        lambda s: math.exp(s * s / (2 * eps)) / s * _inner(s, eps) / eps if s > 0 else 0.0,
        r, 1.0, epsabs=0.0, epsrel=1e-12, limit=200,
    )
    return v


def _log_integral(r0, eps):
    # int_{r0}^1 exp((s^2 - 1) / 2 eps) / s ds  (scaled by exp(-1/(2 eps)))
    v, _ = quad(lambda s: math.exp((s * s - 1) / (2 * eps)) / s, r0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return v


def radial_equilibrium_potential(r, r0, eps):
    """P(hit the ball of radius r0 before the unit circle) from radius r."""
    if r <= r0:
        return 1.0
    return _log_integral(r, eps) / _log_integral(r0, eps)


def radial_capacity_ratio(r0, eps):
    """cap(B_r0, disk^c) divided by the boundary integral 2 pi exp(-1 / 2 eps)."""
    return eps / _log_integral(r0, eps)


def radial_eigenvalue(eps, r_start=1e-6):
    """Principal Dirichlet eigenvalue of -eps (u'' + u'/r) + r u' on [0, 1]."""

    def end_value(lam):
        def rhs(r, y):
            u, du = y
            return [du, (r * du - lam * u) / eps - du / r]

        a = -lam / (4 * eps)
        y0 = [1 + a * r_start**2, 2 * a * r_start]
        sol = solve_ivp(rhs, (r_start, 1.0), y0, method="DOP853", rtol=1e-12, atol=1e-14)
        return sol.y[0, -1]

    # bracket the first sign change of u(1; lam) from below
    lo = 0.0
    step = 0.02
    hi = step
    while end_value(hi) > 0:
        lo, hi = hi, hi * 1.5
    return brentq(end_value, lo, hi, xtol=1e-15, rtol=1e-13)


def discrete_fiber_energy(chi, delta, eps, n_cells=200):
    """Minimum of sum_j (g_{j+1} - g_j)^2 W_j / a^2 over P1 profiles on a
    uniform mesh with g(0) = 0, g(delta) = 1, where W_j is the exact integral of
    chi(t) exp(t / eps) over cell j.  The minimiser is a series of resistors:
    energy = 1 / sum_j a^2 / W_j."""
    edges = np.linspace(0.0, delta, n_cells + 1)
    a = edges[1] - edges[0]
    res = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        # factor exp(hi / eps) out so the cell integral stays O(a)
        w, _ = quad(lambda t: chi(t) * math.exp((t - hi) / eps), lo, hi, epsabs=0.0, epsrel=1e-13)
        res += a * a / w * math.exp(-hi / eps)
    return 1.0 / res
