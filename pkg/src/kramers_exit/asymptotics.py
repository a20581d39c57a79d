"""Sharp small-temperature formulas for the mean exit time and the principal
Dirichlet eigenvalue, all evaluated in log space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import normal_derivative
from .errors import DegenerateBoundaryMinimum, InconsistentMinima, NotConstantBoundary
from .potential import DEGENERACY_TOL

CONST_TOL = 1e-8


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class LaplaceIntegral:
    """``mantissa * exp(-shift / epsilon)``; ``shift`` is the least boundary value of f."""

    mantissa: float
    shift: float
    epsilon: float

    @property
    def log_value(self):
        if math.isinf(self.epsilon):
            return math.log(self.mantissa)
        return math.log(self.mantissa) - self.shift / self.epsilon

    @property
    def value(self):
        return _exp(self.log_value)


@dataclass(frozen=True)
class SharpPrediction:
    epsilon: float
    log_mean_exit: float
    method: str
    boundary_integral: LaplaceIntegral | None = None

    @property
    def mean_exit(self):
        return _exp(self.log_mean_exit)

    @property
    def eigenvalue(self):
        return _exp(-self.log_mean_exit)

    @property
    def log_eigenvalue(self):
        return -self.log_mean_exit


@dataclass(frozen=True)
class BoundaryMinimum:
    z: np.ndarray
    theta: float
    f_value: float
    normal_derivative: float
    tangential_hessian_det: float


def boundary_laplace_integral(p, bq, epsilon):
    """Quadrature of ``int dn f exp(-f / eps) dsigma`` with the boundary
    minimum of f factored out."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    f = p.value(bq.nodes)
    dn = normal_derivative(p, bq)
    shift = float(np.min(f))
    if math.isinf(epsilon):
        weights = np.ones_like(f)
    else:
        weights = np.exp(-(f - shift) / epsilon)
    return LaplaceIntegral(float(np.sum(bq.weights * dn * weights)), shift, float(epsilon))


def _well_log_prefactor(x0, epsilon, dim):
    return 0.5 * dim * math.log(2 * math.pi * epsilon) - 0.5 * math.log(x0.det_hessian)


def sharp_mean_exit(p, dom, bq, x0, epsilon):
    """Mean exit time (2 pi eps)^{d/2} exp(-f(x0)/eps) / (sqrt(det Hess f(x0)) * I_eps)
    where I_eps is the boundary Laplace integral; the eigenvalue is its reciprocal."""
    integral = boundary_laplace_integral(p, bq, epsilon)
    log_t = _well_log_prefactor(x0, epsilon, p.dim) - integral.log_value - x0.value / epsilon
    return SharpPrediction(float(epsilon), float(log_t), "generic-quadrature", integral)


def constant_boundary_mean_exit(p, bq, x0, f1, epsilon, const_tol=CONST_TOL):
    """Special case f = f1 on the whole boundary."""
    f = p.value(bq.nodes)
    mismatch = float(np.max(np.abs(f - f1)))
    if mismatch > const_tol:
        raise NotConstantBoundary(f"f deviates from f1 = {f1} by {mismatch:.3e} on the boundary")
    flux = float(np.sum(bq.weights * normal_derivative(p, bq)))
    log_t = _well_log_prefactor(x0, epsilon, p.dim) + (f1 - x0.value) / epsilon - math.log(flux)
    return SharpPrediction(float(epsilon), float(log_t), "constant-boundary")


def _outward_normal(param, theta):
    t = param.d1(theta)
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _trace_derivs(p, param, theta):
    z = param.point(theta)
    d1 = param.d1(theta)
    d2 = param.d2(theta)
    g = p.grad(z)
    H = p.hess(z)
    first = float(g @ d1)
    second = float(d1 @ H @ d1 + g @ d2)
    return first, second


def _refine(p, param, theta, width, max_iter=50):
    """Safeguarded Newton on d/dtheta f(sigma(theta)) within theta +- width."""
    lo, hi = theta - width, theta + width
    t = theta
    for _ in range(max_iter):
        g1, g2 = _trace_derivs(p, param, t)
        if abs(g1) < 1e-14:
            break
        if g2 > 0:
            step = -g1 / g2
        else:
            step = -np.sign(g1) * 0.25 * width
        new = t + step
        if not lo <= new <= hi:
            new = 0.5 * (t + (hi if step > 0 else lo))
        if abs(new - t) < 1e-15:
            t = new
            break
        t = new
    return t


def find_boundary_minima(p, bq, global_tol=None, degeneracy_tol=DEGENERACY_TOL):
    """Global minima of f restricted to a closed curve, with their curvature."""
    param = bq.parametrization
    if p.dim != 2:
        raise ValueError("boundary minima search is implemented for d = 2")
    F = p.value(bq.nodes)
    n = len(F)
    left, right = np.roll(F, 1), np.roll(F, -1)
    candidates = np.flatnonzero((F <= left) & (F <= right))
    h = 2 * np.pi / n
    refined = []
    for i in candidates:
        t = _refine(p, param, bq.theta[i], 1.5 * h)
        refined.append(np.mod(t, 2 * np.pi))
    values = np.array([float(p.value(param.point(t))) for t in refined])
    fmin = float(values.min())
    tol = global_tol if global_tol is not None else 1e-8 * (1 + abs(fmin))
    minima = []
    seen = []
    for t, v in sorted(zip(refined, values)):
        if v > fmin + tol:
            continue
        if any(min(abs(t - s), 2 * np.pi - abs(t - s)) < 1e-7 for s in seen):
            continue
        seen.append(t)
        _, second = _trace_derivs(p, param, t)
        speed2 = float(np.sum(param.d1(t) ** 2))
        curvature = second / speed2
        if curvature <= degeneracy_tol:
            raise DegenerateBoundaryMinimum(
                f"boundary minimum at theta = {t:.6f} has tangential second derivative {curvature:.3e}"
            )
        z = param.point(t)
        dn = float(p.grad(z) @ _outward_normal(param, t))
        minima.append(BoundaryMinimum(np.asarray(z), float(t), float(v), dn, float(curvature)))
    return minima


def morse_boundary_mean_exit(p, bq, x0, minima, epsilon, global_tol=None):
    """Laplace evaluation of the boundary integral at finitely many
    nondegenerate boundary minima z_j:

        E[tau] ~ sqrt(2 pi eps) exp((f(z_1) - f(x0)) / eps)
                 / (sqrt(det Hess f(x0)) * sum_j dn f(z_j) / sqrt(det Hess f|bd(z_j)))
    """
    if not minima:
        raise InconsistentMinima("no boundary minima supplied")
    f1 = minima[0].f_value
    tol = global_tol if global_tol is not None else 1e-8 * (1 + abs(f1))
    if any(abs(m.f_value - f1) > tol for m in minima):
        raise InconsistentMinima("boundary minima do not share one value of f")
    if any(m.tangential_hessian_det <= 0 for m in minima):
        raise InconsistentMinima("boundary minima must be nondegenerate")
    rate = sum(m.normal_derivative / math.sqrt(m.tangential_hessian_det) for m in minima)
    log_t = (
        0.5 * math.log(2 * math.pi * epsilon)
        - math.log(rate)
        - 0.5 * math.log(x0.det_hessian)
        + (f1 - x0.value) / epsilon
    )
    return SharpPrediction(float(epsilon), float(log_t), "morse-boundary")
