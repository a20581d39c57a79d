"""Capacity of a small ball C around the minimum relative to the exterior of D.

Three routes are offered: the explicit fiber test function (an upper bound),
the fiberwise optimal profile g* (lower-bound machinery) and the Dirichlet
form of the finite-difference equilibrium potential.  All values carry a
log-scale shift so that ``exp(-f / eps)`` never underflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .asymptotics import boundary_laplace_integral
from .eikonal import check_chart
from .errors import InvalidCapacitor, NonpositiveChi
from .pde import Grid2D, assemble, dirichlet_form, solve_equilibrium_potential

QUAD_EPSABS = 0.0
QUAD_EPSREL = 1e-12


@dataclass(frozen=True)
class CapacitorConfig:
    center: tuple
    radius: float
    delta: float


def distance_to_boundary(point, bq):
    return float(np.min(np.linalg.norm(bq.nodes - np.asarray(point, float), axis=-1)))


def validate_capacitor(cfg, dom, chart=None, n_check=512):
    """Raise InvalidCapacitor unless the ball lies in D and misses the tube."""
    if not cfg.radius > 0:
        raise InvalidCapacitor("capacitor radius must be positive")
    c = np.asarray(cfg.center, dtype=float)
    ang = 2 * np.pi * np.arange(n_check) / n_check
    rim = c + cfg.radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if not (dom.contains(c) and np.all(dom.contains(rim))):
        raise InvalidCapacitor("capacitor ball is not contained in D")
    if chart is not None:
        gap = float(np.min(np.linalg.norm(chart.psi_nodes - c, axis=-1)))
        if gap <= cfg.radius:
            raise InvalidCapacitor(f"capacitor meets the tube (closest tube sample at {gap:.4g})")
    return cfg


def default_capacitor(dom, bq, x0, delta, chart=None):
    """Ball of radius a quarter of the distance from x0 to the boundary."""
    loc = np.asarray(getattr(x0, "location", x0), dtype=float)
    cfg = CapacitorConfig(tuple(float(v) for v in loc), 0.25 * distance_to_boundary(loc, bq), float(delta))
    return validate_capacitor(cfg, dom, chart)


@dataclass(frozen=True)
class CapacityEstimate:
    """``mantissa * exp(-shift / epsilon)``."""

    epsilon: float
    mantissa: float
    shift: float
    method: str
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mantissa > 0:
            raise ValueError(f"capacity must be positive, got mantissa {self.mantissa}")

    @property
    def log_value(self):
        return math.log(self.mantissa) - self.shift / self.epsilon

    @property
    def value(self):
        try:
            return math.exp(self.log_value)
        except OverflowError:
            return math.inf

    def ratio(self, other):
        return math.exp(self.log_value - other.log_value)


def capacity_asymptotic(p, bq, epsilon):
    """The boundary integral itself, which capacity approaches as eps -> 0."""
    li = boundary_laplace_integral(p, bq, epsilon)
    return CapacityEstimate(li.epsilon, li.mantissa, li.shift, "boundary-integral-asymptotic")


def _boltzmann_weights(chart, epsilon):
    f = chart.f_plus_nodes
    shift = float(np.min(f))
    return chart.bq.weights * np.exp(-(f - shift) / epsilon), shift


def _laplace_fiber(fun, delta, epsilon, sign=-1):
    """``int_0^delta fun(x) exp(sign * x / eps) dx`` integrated in u = x / eps."""
    val, _ = quad(
        lambda u: fun(epsilon * u) * math.exp(sign * u), 0.0, delta / epsilon,
        epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200,
    )
    return epsilon * val


def _chi_checked(chart, i):
    chi = chart.chi_node(i)
    fine = np.linspace(0.0, chart.delta, 8 * len(chart.xd))
    if np.min(chi(fine)) <= 0:
        raise NonpositiveChi(f"chi is not positive along the fiber of node {i}")
    return chi


def capacity_upper_bound(chart, cfg, epsilon):
    """Dirichlet form of ``h(Psi(z, x_d)) = g(x_d)``,
    ``g = (1 - exp(-x_d / eps)) / (1 - exp(-delta / eps))``, extended by 1
    inside and 0 outside D."""
    check_chart(chart, cfg.delta)
    eps, delta = float(epsilon), chart.delta
    w, shift = _boltzmann_weights(chart, eps)
    fibers = np.array([_laplace_fiber(_chi_checked(chart, i), delta, eps) for i in range(len(w))])
    norm = eps * (-math.expm1(-delta / eps)) ** 2
    total = float(np.sum(w * fibers) / norm)
    return CapacityEstimate(eps, total, shift, "test-function-upper", {"tube": total, "bulk": 0.0})


@dataclass
class FiberProfile:
    t: np.ndarray
    g: np.ndarray
    energy: float
    upper_profile_energy: float
    normaliser: float


def fiber_profile(chi, delta, h_delta, epsilon, n_samples=201):
    """Minimiser of ``int_0^delta |g'|^2 chi exp(t / eps) dt`` with
    ``g(0) = 0`` and ``g(delta) = h_delta``.

    ``g*(t) = h_delta K(t) / K(delta)`` with ``K(t) = int_0^t exp(-s / eps) / chi(s) ds``
    and energy ``h_delta^2 / K(delta)``.
    """
    eps = float(epsilon)
    inv = lambda s: 1.0 / chi(s)  # noqa: E731
    t = np.linspace(0.0, delta, n_samples)
    K = np.array([_laplace_fiber(inv, s, eps) if s > 0 else 0.0 for s in t])
    k_delta = K[-1]
    upper = _laplace_fiber(chi, delta, eps) / (eps * (-math.expm1(-delta / eps))) ** 2
    return FiberProfile(
        t=t, g=h_delta * K / k_delta, energy=h_delta**2 / k_delta,
        upper_profile_energy=h_delta**2 * upper, normaliser=k_delta,
    )


def optimal_fiber_profile(chart, node, h_delta, epsilon, n_samples=201):
    """``fiber_profile`` on the fiber of quadrature node ``node``."""
    return fiber_profile(_chi_checked(chart, node), chart.delta, h_delta, epsilon, n_samples)


def capacity_lower_bound(chart, cfg, epsilon, h_delta=1.0):
    """``eps * sum_z w(z) exp(-f(z) / eps) h_delta(z)^2 / K_z(delta)``.

    This bounds capacity from below whenever ``h_delta`` does not exceed the
    equilibrium potential at the inner tube edge ``Psi(z, delta)``.
    """
    check_chart(chart, cfg.delta)
    eps = float(epsilon)
    w, shift = _boltzmann_weights(chart, eps)
    hd = np.broadcast_to(np.asarray(h_delta, dtype=float), w.shape)
    inv_int = np.array(
        [_laplace_fiber(lambda s, c=_chi_checked(chart, i): 1.0 / c(s), chart.delta, eps) for i in range(len(w))]
    )
    total = float(eps * np.sum(w * hd**2 / inv_int))
    return CapacityEstimate(eps, total, shift, "fiber-optimal-lower", {"tube": total, "bulk": 0.0})


def capacity_pde(p, dom, cfg, epsilon, grid, shift=None, cut="shortley-weller"):
    """Dirichlet form of the discrete equilibrium potential.

    ``grid`` is a spacing or a :class:`Grid2D` built with this capacitor.
    """
    if not isinstance(grid, Grid2D):
        grid = Grid2D(dom, float(grid), anchor=cfg.center, capacitor=cfg, cut=cut)
    op = assemble(p, grid, epsilon)
    h = solve_equilibrium_potential(op)
    if shift is None:
        cut_pts = grid.bpoint[(grid.nbr < 0) & (grid.bvalue == 0)]
        shift = float(np.min(p.value(cut_pts)))
    total, parts = dirichlet_form(op, h, shift)
    est = CapacityEstimate(float(epsilon), total, float(shift), "pde-dirichlet-form", parts)
    object.__setattr__(est, "breakdown", dict(parts, excursion=h.excursion))
    return est, h


def log_mean_exit_via_capacity(cap, x0, epsilon, dim=2):
    return (
        0.5 * dim * math.log(2 * math.pi * epsilon)
        - 0.5 * math.log(x0.det_hessian)
        - x0.value / epsilon
        - cap.log_value
    )


def mean_exit_via_capacity(cap, x0, epsilon, dim=2):
    """``(2 pi eps)^{d/2} exp(-f(x0) / eps) / (sqrt(det Hess f(x0)) cap)``."""
    try:
        return math.exp(log_mean_exit_via_capacity(cap, x0, epsilon, dim))
    except OverflowError:
        return math.inf


def well_integral(p, x0, epsilon, dom=None, h=None):
    """Laplace value ``(2 pi eps)^{d/2} exp(-f(x0)/eps) / sqrt(det Hess f(x0))``.

    With ``dom`` and a spacing ``h`` also returns the grid quadrature of
    ``int_D exp(-f / eps) dx`` as a second value.
    """
    eps = float(epsilon)
    laplace = (2 * math.pi * eps) ** (p.dim / 2) * math.exp(-x0.value / eps) / math.sqrt(x0.det_hessian)
    if dom is None or h is None:
        return laplace
    grid = Grid2D(dom, h, anchor=x0.location)
    f = p.value(grid.nodes)
    return laplace, float(np.sum(np.exp(-f / eps)) * grid.h**2)
