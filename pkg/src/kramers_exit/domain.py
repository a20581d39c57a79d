"""Implicit level-set domains D = {phi < 0}, boundary quadrature, and the
check that a potential has the expected single-well geometry on D."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateGradient, DimensionUnsupported, TraceFailure
from .errors import NoConvergence
from .potential import CriticalPoint, PolynomialPotential, find_critical_points

GRAD_FLOOR = 1e-8
GRAD_DEGENERATE = 1e-14
INTERIOR_MARGIN = 0.05


# parametrizations of closed curves, theta in [0, 2 pi) -------------------


class EllipseParam:
    """sigma(theta) = center + (a cos theta, b sin theta), counterclockwise."""

    def __init__(self, a, b, center=(0.0, 0.0)):
        self.a = float(a)
        self.b = float(b)
        self.center = np.asarray(center, dtype=float)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.center + np.stack([self.a * np.cos(theta), self.b * np.sin(theta)], axis=-1)

    def d1(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.sin(theta), self.b * np.cos(theta)], axis=-1)

    def d2(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.cos(theta), -self.b * np.sin(theta)], axis=-1)

    def angle(self, x):
        x = np.asarray(x, dtype=float) - self.center
        return np.mod(np.arctan2(x[..., 1] / self.b, x[..., 0] / self.a), 2 * np.pi)


class SplineParam:
    """Periodic cubic spline through points sampled at equispaced theta."""

    def __init__(self, points, center):
        points = np.asarray(points, dtype=float)
        n = len(points)
        theta = 2 * np.pi * np.arange(n + 1) / n
        self._spline = CubicSpline(theta, np.vstack([points, points[:1]]), bc_type="periodic")
        self.center = np.asarray(center, dtype=float)

    def point(self, theta):
        return self._spline(np.mod(theta, 2 * np.pi))

    def d1(self, theta):
        return self._spline(np.mod(theta, 2 * np.pi), 1)

    def d2(self, theta):
        return self._spline(np.mod(theta, 2 * np.pi), 2)

    def angle(self, x):
        # nearest node on a fine sampling; only used for exit-location binning
        x = np.asarray(x, dtype=float)
        fine = 2 * np.pi * np.arange(2048) / 2048
        pts = self.point(fine)
        d2 = np.sum((x[..., None, :] - pts) ** 2, axis=-1)
        return fine[np.argmin(d2, axis=-1)]


# domains -----------------------------------------------------------------


class Domain:
    """Bounded open set ``{phi < 0}``.

    Parameters
    ----------
    phi : Potential-like
        Level-set function with ``value`` and ``grad``; a
        :class:`PolynomialPotential` lets the compiled kernels use it.
    bounding_box : array_like, shape (d, 2)
    center : array_like
        A point well inside D, used as reference for tracing.
    parametrization : object, optional
        Analytic boundary parametrization (``point``, ``d1``, ``d2``, ``angle``).
    """

    def __init__(self, phi, bounding_box, center=None, parametrization=None, name="level_set"):
        self.phi = phi
        self.dim = phi.dim
        self.bounding_box = np.asarray(bounding_box, dtype=float)
        self.center = (
            self.bounding_box.mean(axis=1) if center is None else np.asarray(center, dtype=float)
        )
        self.parametrization = parametrization
        self.name = name

    def phi_value(self, x):
        return self.phi.value(x)

    def grad_phi(self, x):
        return self.phi.grad(x)

    def contains(self, x):
        return self.phi.value(x) < 0

    def signed_measure(self, x):
        """phi / |grad phi|, a first-order signed distance to the boundary."""
        g = np.linalg.norm(self.phi.grad(x), axis=-1)
        if np.any(g < GRAD_DEGENERATE):
            raise DegenerateGradient("level-set gradient vanishes; signed distance undefined")
        return self.phi.value(x) / np.maximum(g, GRAD_FLOOR)

    def floored_signed_measure(self, x):
        """Like :meth:`signed_measure` but never raises (gradient floored)."""
        g = np.linalg.norm(self.phi.grad(x), axis=-1)
        return self.phi.value(x) / np.maximum(g, GRAD_FLOOR)

    def normal(self, x):
        g = self.phi.grad(x)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.bounding_box[:, 1] - self.bounding_box[:, 0]))

    def angle_of(self, x):
        if self.parametrization is not None:
            return self.parametrization.angle(x)
        x = np.asarray(x, dtype=float) - self.center
        return np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)

    def check(self, n_samples=2000, seed=0):
        """Sampled check of the smoothness and bounding-box invariants."""
        rng = np.random.default_rng(seed)
        bq = build_boundary_quadrature(self, 256)
        grad_ok = bool(np.all(np.linalg.norm(self.phi.grad(bq.nodes), axis=-1) > 0))
        lo, hi = self.bounding_box[:, 0], self.bounding_box[:, 1]
        edge = []
        for k in range(self.dim):
            for side in (lo[k], hi[k]):
                pts = lo + rng.random((n_samples // (2 * self.dim), self.dim)) * (hi - lo)
                pts[:, k] = side
                edge.append(pts)
        box_ok = bool(np.all(self.phi.value(np.vstack(edge)) > 0))
        return grad_ok and box_ok

    def __repr__(self):
        return f"Domain({self.name})"


def ellipse(a=1.0, b=1.0, center=(0.0, 0.0)):
    """(x - cx)^2 / a^2 + (y - cy)^2 / b^2 - 1 < 0."""
    cx, cy = (float(c) for c in center)
    terms = {
        (2, 0): 1 / a**2,
        (1, 0): -2 * cx / a**2,
        (0, 2): 1 / b**2,
        (0, 1): -2 * cy / b**2,
        (0, 0): cx**2 / a**2 + cy**2 / b**2 - 1,
    }
    pad = 0.25 * max(a, b)
    box = [[cx - a - pad, cx + a + pad], [cy - b - pad, cy + b + pad]]
    return Domain(PolynomialPotential(terms, dim=2), box, center=(cx, cy),
                  parametrization=EllipseParam(a, b, (cx, cy)), name="ellipse")


def disk(radius=1.0, center=(0.0, 0.0)):
    """|x - center|^2 - radius^2 < 0 (the level set is not normalised)."""
    cx, cy = (float(c) for c in center)
    R = float(radius)
    terms = {(2, 0): 1.0, (1, 0): -2 * cx, (0, 2): 1.0, (0, 1): -2 * cy, (0, 0): cx**2 + cy**2 - R**2}
    pad = 0.25 * R
    box = [[cx - R - pad, cx + R + pad], [cy - R - pad, cy + R + pad]]
    dom = Domain(PolynomialPotential(terms, dim=2), box, center=(cx, cy),
                 parametrization=EllipseParam(R, R, (cx, cy)), name="disk")
    return dom


def level_set(terms, bounding_box, center=None):
    """Generic polynomial level set, traced numerically."""
    from .potential import polynomial

    return Domain(polynomial(terms, dim=2), bounding_box, center=center, name="level_set")


DOMAINS = {"disk": disk, "ellipse": ellipse, "level_set": level_set}


def make_domain(name, **params):
    try:
        factory = DOMAINS[name]
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; choose from {sorted(DOMAINS)}") from None
    return factory(**params)


# boundary quadrature ----------------------------------------------------


@dataclass
class BoundaryQuadrature:
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    speed: np.ndarray
    parametrization: object

    def __len__(self):
        return len(self.weights)

    @property
    def perimeter(self):
        return float(np.sum(self.weights))


def build_boundary_quadrature(dom, n_nodes):
    """Periodic trapezoid rule on the boundary curve (d = 2).

    Nodes are equispaced in the curve parameter; weights are
    ``|sigma'(theta_i)| * 2 pi / n``.  Domains without an analytic
    parametrization are traced first.
    """
    if dom.dim != 2:
        raise DimensionUnsupported("boundary quadrature is only implemented for d = 2")
    if n_nodes < 16:
        raise ValueError("n_nodes must be at least 16")
    param = dom.parametrization
    if param is None:
        param = trace_boundary(dom)
        dom.parametrization = param
    theta = 2 * np.pi * np.arange(n_nodes) / n_nodes
    nodes = param.point(theta)
    if not isinstance(param, EllipseParam):
        nodes = project_to_boundary(dom, nodes)
    speed = np.linalg.norm(param.d1(theta), axis=-1)
    weights = speed * (2 * np.pi / n_nodes)
    return BoundaryQuadrature(
        nodes=nodes,
        normals=dom.normal(nodes),
        weights=weights,
        theta=theta,
        speed=speed,
        parametrization=param,
    )


def project_to_boundary(dom, x, iters=30, tol=1e-14):
    """Newton projection x <- x - phi grad phi / |grad phi|^2 onto {phi = 0}."""
    x = np.array(x, dtype=float)
    for _ in range(iters):
        v = dom.phi.value(x)
        g = dom.phi.grad(x)
        x = x - (v / np.sum(g * g, axis=-1))[..., None] * g
        if np.max(np.abs(v)) < tol:
            break
    return x


def trace_boundary(dom, step=None, n_fine=4096, max_steps=1_000_000):
    """March along {phi = 0} with a tangent predictor and Newton corrector."""
    if step is None:
        step = dom.diagonal / 4000
    c = dom.center
    if not dom.contains(c):
        raise TraceFailure("domain center is not inside the domain")
    far = np.array([dom.bounding_box[0, 1], c[1]])
    if dom.phi.value(far) <= 0:
        raise TraceFailure("bounding box does not enclose the domain along +x")
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dom.phi.value(c + mid * (far - c)) < 0:
            lo = mid
        else:
            hi = mid
    start = project_to_boundary(dom, c + lo * (far - c))

    pts = [start]
    x = start
    travelled = 0.0
    for _ in range(max_steps):
        g = dom.phi.grad(x)
        t = np.array([-g[1], g[0]]) / np.linalg.norm(g)
        y = project_to_boundary(dom, x + step * t)
        travelled += np.linalg.norm(y - x)
        if travelled > 20 * step and np.linalg.norm(y - start) < 1.5 * step:
            break
        pts.append(y)
        x = y
    else:
        raise TraceFailure(f"boundary trace did not close within {max_steps} steps")
    pts = np.asarray(pts)

    # chord-length spline, then resample at equal arc length
    closed = np.vstack([pts, pts[:1]])
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    spline = CubicSpline(chord, closed, bc_type="periodic")
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    a, b = chord[:-1, None], chord[1:, None]
    s = 0.5 * (b - a) * gl_x + 0.5 * (a + b)
    speed = np.linalg.norm(spline(s, 1), axis=-1)
    seg = np.sum(0.5 * (b - a) * gl_w * speed, axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = arc[-1] * np.arange(n_fine) / n_fine

    def arc_at(u):
        k = np.clip(np.searchsorted(chord, u, side="right") - 1, 0, len(seg) - 1)
        lo_k = chord[k][:, None]
        half = 0.5 * (u[:, None] - lo_k)
        nodes = half * gl_x + 0.5 * (u[:, None] + lo_k)
        return arc[k] + np.sum(half * gl_w * np.linalg.norm(spline(nodes, 1), axis=-1), axis=1)

    u = np.interp(targets, arc, chord)
    for _ in range(4):
        u = u - (arc_at(u) - targets) / np.linalg.norm(spline(u, 1), axis=-1)
    fine = project_to_boundary(dom, spline(u))
    return SplineParam(fine, c)


# hypothesis check -------------------------------------------------------


@dataclass
class HypothesisReport:
    normal_derivative_min: float
    unique_minimum: bool
    x0: CriticalPoint | None
    interior_min_value: float
    boundary_min_value: float
    passed: bool
    interior_critical_points: list

    def to_dict(self):
        return {
            "passed": self.passed,
            "normal_derivative_min": self.normal_derivative_min,
            "unique_minimum": self.unique_minimum,
            "x0": None if self.x0 is None else [float(v) for v in self.x0.location],
            "x0_nondegenerate": None if self.x0 is None else bool(self.x0.nondegenerate),
            "det_hessian_x0": None if self.x0 is None else self.x0.det_hessian,
            "interior_min_value": self.interior_min_value,
            "boundary_min_value": self.boundary_min_value,
            "n_interior_critical_points": len(self.interior_critical_points),
        }


def normal_derivative(p, bq):
    return np.sum(p.grad(bq.nodes) * bq.normals, axis=-1)


def verify_hypothesis(p, dom, bq, n_starts=64):
    """Check the single-well geometry: outward-increasing f on the boundary,
    one nondegenerate interior critical point, a minimum below the boundary."""
    dn = normal_derivative(p, bq)
    margin = INTERIOR_MARGIN * dom.diagonal

    def interior(x):
        return dom.phi.value(x) < 0 and dom.floored_signed_measure(x) < -margin

    try:
        crit = find_critical_points(p, dom.bounding_box, n_starts=n_starts, keep=interior)
    except NoConvergence:
        crit = []
    x0 = crit[0] if crit else None
    unique = len(crit) == 1 and crit[0].min_eigenvalue > 0
    bmin = float(np.min(p.value(bq.nodes)))
    imin = float(x0.value) if x0 is not None else float("nan")
    passed = bool(
        dn.min() > 0 and unique and x0 is not None and x0.nondegenerate and x0.value < bmin
    )
    return HypothesisReport(
        normal_derivative_min=float(dn.min()),
        unique_minimum=bool(unique),
        x0=x0,
        interior_min_value=imin,
        boundary_min_value=bmin,
        passed=passed,
        interior_critical_points=crit,
    )
