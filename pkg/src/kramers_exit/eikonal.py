"""Boundary eikonal problem and tubular coordinates near the boundary (d = 2).

The eikonal function Phi solves |grad Phi|^2 = |grad f|^2 with Phi = f and
dn Phi = -dn f on the boundary.  It is computed by Hamiltonian
characteristics::

    x' = 2 p,   p' = 2 Hess f(x) grad f(x),   Phi' = 2 |p|^2,

started at a boundary point z with ``p(0) = grad f(z) - 2 dn f(z) n(z)``.
With ``f_- = (Phi - f) / 2`` and ``f_+ = (Phi + f) / 2``, the chart
``Psi(z, x_d)`` follows the fiber through z along ``grad f_- / |grad f_-|^2``
up to depth ``f_- = x_d``.

Fibers are not rays.  Ray data are interpolated on the ray-coordinate
rectangle (theta, t) with periodic padding in theta, and fibers are
integrated in those coordinates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import ChartMismatch, HamiltonianDrift, LeftTube, MonotonicityFailure, RayCrossing

ODE_TOL = 1e-9
CHART_TOL = 1e-6
RK_RTOL = 1e-12
RK_ATOL = 1e-13
N_T = 240
N_XD = 97
PAD = 8


@dataclass(frozen=True)
class CharacteristicRay:
    """One inward characteristic sampled on ``t``."""

    z: np.ndarray
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    f: np.ndarray
    h_drift: float

    @property
    def t_max(self):
        return float(self.t[-1])

    @property
    def f_minus(self):
        return 0.5 * (self.phi - self.f)

    @property
    def f_plus(self):
        return 0.5 * (self.phi + self.f)

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.p, self.phi))


def initial_momentum(p, dom, z):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = p.grad(z)
    n = dom.normal(z)
    dn = np.sum(g * n, axis=-1)
    return g - 2 * dn[:, None] * n, dn


def _hamilton_rhs(p, n_rays):
    def rhs(t, y):
        s = y.reshape(5, n_rays)
        x = s[:2].T
        mom = s[2:4]
        g = p.grad(x)
        H = p.hess(x)
        dp = 2 * np.einsum("nij,nj->in", H, g)
        return np.concatenate([2 * mom, dp, 2 * np.sum(mom * mom, axis=0)[None]]).ravel()

    return rhs


def _box_event(dom, n_rays):
    lo, hi = dom.bounding_box[:, 0], dom.bounding_box[:, 1]

    def event(t, y):
        x = y.reshape(5, n_rays)[:2]
        return float(np.min(np.minimum(x - lo[:, None], hi[:, None] - x)))

    event.terminal = True
    event.direction = -1
    return event


def _integrate(p, dom, z, t_max, rtol=RK_RTOL, atol=RK_ATOL, stop_at_box=False):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    n = len(z)
    p0, dn = initial_momentum(p, dom, z)
    if np.any(dn <= 0):
        raise ValueError("rays need dn f > 0 at their anchor")
    y0 = np.concatenate([z.T, p0.T, p.value(z)[None]]).ravel()
    sol = solve_ivp(
        _hamilton_rhs(p, n), (0.0, float(t_max)), y0, method="DOP853",
        rtol=rtol, atol=atol, dense_output=True, events=_box_event(dom, n),
    )
    if sol.status == 1 and not stop_at_box:
        raise LeftTube(f"a characteristic left the bounding box at t = {sol.t[-1]:.4g}")
    if sol.status == -1:
        raise HamiltonianDrift(f"ray integration failed: {sol.message}")
    return sol, n


def _unpack(y, n):
    s = y.reshape(5, n, -1)
    return np.moveaxis(s[:2], 0, -1), np.moveaxis(s[2:4], 0, -1), s[4]


def _drift(p, x, mom):
    g = p.grad(x)
    return np.abs(np.sum(mom * mom, axis=-1) - np.sum(g * g, axis=-1))


def shoot_ray(p, dom, z, t_max, n_samples=N_T, ode_tol=ODE_TOL):
    """Integrate the inward characteristic from the boundary point ``z``.

    Sampling stops early where the Hamiltonian drift first exceeds
    ``ode_tol``; a drift above ``100 * ode_tol`` makes the ray unusable.
    """
    sol, _ = _integrate(p, dom, z, t_max)
    t = np.linspace(0.0, sol.t[-1], n_samples)
    x, mom, phi = _unpack(sol.sol(t), 1)
    x, mom, phi = x[0], mom[0], phi[0]
    drift = _drift(p, x, mom)
    if drift.max() > 100 * ode_tol:
        raise HamiltonianDrift(f"|H| reached {drift.max():.3e} along the ray from {np.ravel(z)}")
    bad = np.flatnonzero(drift > ode_tol)
    keep = bad[0] if bad.size else len(t)
    return CharacteristicRay(
        z=np.asarray(z, dtype=float).ravel(), t=t[:keep], x=x[:keep], p=mom[:keep], phi=phi[:keep],
        f=p.value(x[:keep]), h_drift=float(drift[:keep].max()),
    )


# ray-coordinate interpolation ---------------------------------------------


class _RayField:
    """Bicubic interpolants of x, p, Phi over (theta, t) for a ray family."""

    def __init__(self, theta, t, x, mom, phi):
        n = len(theta)
        h = 2 * np.pi / n
        idx = np.arange(-PAD, n + PAD)
        th = idx * h + theta[0]
        wrap = np.mod(idx, n)

        def spl(a):
            return RectBivariateSpline(th, t, a[wrap], kx=3, ky=3, s=0)

        self.theta0 = theta[0]
        self.t_max = t[-1]
        self.sx, self.sy = spl(x[..., 0]), spl(x[..., 1])
        self.spx, self.spy = spl(mom[..., 0]), spl(mom[..., 1])
        self.sphi = spl(phi)

    def _wrap(self, th):
        return np.mod(th - self.theta0, 2 * np.pi) + self.theta0

    def position(self, th, t, dth=0, dt=0):
        th = self._wrap(th)
        return np.stack([self.sx.ev(th, t, dth, dt), self.sy.ev(th, t, dth, dt)], axis=-1)

    def momentum(self, th, t):
        th = self._wrap(th)
        return np.stack([self.spx.ev(th, t), self.spy.ev(th, t)], axis=-1)

    def phi(self, th, t, dth=0, dt=0):
        return self.sphi.ev(self._wrap(th), t, dth, dt)


def _fiber_velocity(p, field, th, t):
    """d(theta, t)/dx_d along the fiber, plus the physical quantities used."""
    X = field.position(th, t)
    Xth = field.position(th, t, dth=1)
    mom = field.momentum(th, t)
    Xt = 2 * mom
    gm = 0.5 * (mom - p.grad(X))
    v = gm / np.sum(gm * gm, axis=-1, keepdims=True)
    det = Xth[..., 0] * Xt[..., 1] - Xth[..., 1] * Xt[..., 0]
    dth = (v[..., 0] * Xt[..., 1] - v[..., 1] * Xt[..., 0]) / det
    dtt = (Xth[..., 0] * v[..., 1] - Xth[..., 1] * v[..., 0]) / det
    return dth, dtt, X, v


def _integrate_fibers(p, field, theta, xd):
    theta = np.asarray(theta, dtype=float)
    n = len(theta)

    def rhs(s, y):
        dth, dtt, _, _ = _fiber_velocity(p, field, y[:n], y[n:])
        return np.concatenate([dth, dtt])

    y0 = np.concatenate([theta, np.zeros(n)])
    if xd[-1] == 0:
        return np.repeat(y0[:, None], len(xd), axis=1).reshape(2, n, -1)
    sol = solve_ivp(rhs, (0.0, xd[-1]), y0, method="DOP853", t_eval=xd, rtol=RK_RTOL, atol=RK_ATOL)
    if sol.status != 0:
        raise RayCrossing(f"fiber integration failed: {sol.message}")
    if np.any(sol.y[n:] > field.t_max) or np.any(sol.y[n:] < 0):
        raise RayCrossing("a fiber left the sampled ray family before reaching the tube depth")
    return sol.y.reshape(2, n, -1)


def _spectral_derivative(values, axis=0):
    n = values.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    return np.real(np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(values, axis=axis), axis=axis))


def _trig_interp(values, theta0, theta):
    """Periodic trigonometric interpolation along axis 0 (equispaced nodes)."""
    n = values.shape[0]
    c = np.fft.fft(values, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        c[n // 2] *= 0.5
        c = np.concatenate([c, c[n // 2: n // 2 + 1]], axis=0)
        k = np.concatenate([k, [n // 2]])
        k[n // 2] = -n // 2
    phase = np.exp(1j * np.outer(np.atleast_1d(theta) - theta0, k))
    return np.real(phase @ c.reshape(len(k), -1)).reshape((-1,) + values.shape[1:])


# the chart -----------------------------------------------------------------


@dataclass
class TubularChart:
    """Chart ``(theta, x_d) -> Psi`` on the tube ``{0 <= f_- <= delta}``.

    Node quantities are tabulated on ``xd`` for every quadrature node; off-node
    angles use trigonometric interpolation in theta and cubic splines in x_d.
    ``jacobian`` is with respect to boundary arc length.
    """

    potential: object
    domain: object
    bq: object
    delta: float
    delta_max: float
    rays: list
    xd: np.ndarray
    psi_nodes: np.ndarray
    jac_nodes: np.ndarray
    gdd_nodes: np.ndarray
    coords: np.ndarray
    field: _RayField = field(repr=False)
    h_drift: float = 0.0

    @property
    def theta(self):
        return self.bq.theta

    @property
    def chi_nodes(self):
        return self.jac_nodes / self.gdd_nodes

    @property
    def f_plus_nodes(self):
        return self.potential.value(self.bq.nodes)

    def _table(self, table, theta, x_d):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rows = _trig_interp(table, self.theta[0], theta)
        return np.array([CubicSpline(self.xd, r)(x_d) for r in rows])

    def chart_jacobian(self, theta, x_d):
        return self._table(self.jac_nodes, theta, x_d)

    def metric_gdd(self, theta, x_d):
        return self._table(self.gdd_nodes, theta, x_d)

    def chi(self, theta, x_d):
        return self._table(self.chi_nodes, theta, x_d)

    def chi_node(self, i):
        """Cubic spline of chi along the fiber of node ``i``."""
        return CubicSpline(self.xd, self.chi_nodes[i])

    def psi(self, theta, x_d):
        """Points Psi(sigma(theta), x_d) for arrays of angles and depths."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        x_d = np.atleast_1d(np.asarray(x_d, dtype=float))
        grid = np.union1d(x_d, [0.0])
        c = _integrate_fibers(self.potential, self.field, theta, grid)
        pts = self.field.position(c[0], c[1])
        return pts[:, np.searchsorted(grid, x_d)]

    def f_minus(self, theta, t):
        X = self.field.position(theta, t)
        return 0.5 * (self.field.phi(theta, t) - self.potential.value(X))

    def f_plus(self, theta, t):
        X = self.field.position(theta, t)
        return 0.5 * (self.field.phi(theta, t) + self.potential.value(X))


def _shoot_family(p, dom, bq, t_cap):
    # the family is followed until the first ray leaves the box; only the
    # part up to the tube depth is ever used
    return _integrate(p, dom, bq.nodes, t_cap, stop_at_box=True)


def _valid_depths(p, sol, n, t_grid, ode_tol):
    """Per-ray f_- reached before the family stops being a valid chart."""
    x, mom, phi = _unpack(sol.sol(t_grid), n)
    fm = 0.5 * (phi - p.value(x))
    drift = _drift(p, x, mom)
    # d/dtheta of ray positions, spectral across the equispaced anchors
    xth = _spectral_derivative(x, axis=0)
    xt = 2 * mom
    det = xth[..., 0] * xt[..., 1] - xth[..., 1] * xt[..., 0]
    rate = np.sum(mom * (mom - p.grad(x)), axis=-1)
    ok_det = det > 0
    ok_mono = rate > 0
    ok_h = drift <= ode_tol
    reach = np.empty(n)
    cause = np.empty(n, dtype=object)
    for i in range(n):
        bad = ~(ok_det[i] & ok_mono[i] & ok_h[i])
        bad[0] = False
        j = np.flatnonzero(bad)
        if j.size:
            k = j[0]
            reach[i] = fm[i, k - 1]
            cause[i] = "crossing" if not ok_det[i, k] else ("monotone" if not ok_mono[i, k] else "drift")
        else:
            reach[i] = fm[i, -1]
            cause[i] = None
    return reach, cause, fm, drift


def largest_delta(p, dom, bq, t_cap=None, ode_tol=ODE_TOL, n_probe=2000):
    """Largest tube depth the characteristic family supports, with the
    limiting cause (``None`` when only the integration horizon limits it)."""
    t_cap = _default_t_cap(p, dom, bq) if t_cap is None else t_cap
    sol, n = _shoot_family(p, dom, bq, t_cap)
    t_grid = np.linspace(0.0, sol.t[-1], n_probe)
    reach, cause, _, _ = _valid_depths(p, sol, n, t_grid, ode_tol)
    i = int(np.argmin(reach))
    return float(reach[i]), cause[i], sol, n


def _default_t_cap(p, dom, bq):
    g = np.linalg.norm(p.grad(bq.nodes), axis=-1)
    return 1.5 * dom.diagonal / max(float(np.min(g)), 1e-3)


def build_chart(p, dom, bq, delta=None, n_t=N_T, n_xd=N_XD, ode_tol=ODE_TOL, t_cap=None):
    """Shoot one ray per quadrature node and tabulate the chart on [0, delta].

    ``delta=None`` picks half the largest admissible depth.
    """
    dmax, cause, sol, n = largest_delta(p, dom, bq, t_cap=t_cap, ode_tol=ode_tol)
    if delta is None:
        delta = 0.5 * dmax
    delta = float(delta)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta >= dmax:
        msg = f"delta = {delta:.4g} exceeds the admissible depth {dmax:.4g}"
        if cause == "monotone":
            raise MonotonicityFailure(msg + " (f_- stops increasing along a ray)")
        if cause == "drift":
            raise HamiltonianDrift(msg + " (Hamiltonian drift)")
        raise RayCrossing(msg)

    # resample the family on [0, T] where every ray has passed 1.25 delta
    probe = np.linspace(0.0, sol.t[-1], 2000)
    x, mom, phi = _unpack(sol.sol(probe), n)
    fm = 0.5 * (phi - p.value(x))
    target = min(1.25 * delta, 0.5 * (delta + dmax)) if delta > 0 else 0.05 * dmax
    hit = np.argmax(fm >= target, axis=1)
    T = probe[min(int(hit.max()) + 2, len(probe) - 1)]
    t = np.linspace(0.0, T, n_t)
    x, mom, phi = _unpack(sol.sol(t), n)
    drift = _drift(p, x, mom)
    if drift.max() > 100 * ode_tol:
        raise HamiltonianDrift(f"|H| reached {drift.max():.3e} inside the tube")
    f_on = p.value(x)
    rays = [
        CharacteristicRay(z=bq.nodes[i], t=t, x=x[i], p=mom[i], phi=phi[i], f=f_on[i], h_drift=float(drift[i].max()))
        for i in range(n)
    ]
    fld = _RayField(bq.theta, t, x, mom, phi)

    xd = np.linspace(0.0, delta, n_xd)
    coords = _integrate_fibers(p, fld, bq.theta, xd)
    th, tt = coords
    _, _, psi, v = _fiber_velocity(p, fld, th, tt)
    psi_th = _spectral_derivative(psi, axis=0)
    speed = bq.speed[:, None]
    jac = np.abs(psi_th[..., 0] * v[..., 1] - psi_th[..., 1] * v[..., 0]) / speed
    gdd = np.sum(v * v, axis=-1)
    return TubularChart(
        potential=p, domain=dom, bq=bq, delta=delta, delta_max=dmax, rays=rays, xd=xd,
        psi_nodes=psi, jac_nodes=jac, gdd_nodes=gdd, coords=coords, field=fld,
        h_drift=float(drift.max()),
    )


def check_chart(chart, delta):
    if abs(chart.delta - delta) > 1e-12 * max(1.0, abs(delta)):
        raise ChartMismatch(f"chart built for delta = {chart.delta}, requested {delta}")


# diagnostics ---------------------------------------------------------------


@dataclass
class ChartDiagnostics:
    orthogonality: float
    affine_profile: float
    depth: float
    jacobian_boundary: float
    metric_boundary: float
    hamiltonian: float
    rows: list

    def as_dict(self):
        return {
            "orthogonality": self.orthogonality,
            "affine_profile": self.affine_profile,
            "depth": self.depth,
            "jacobian_boundary": self.jacobian_boundary,
            "metric_boundary": self.metric_boundary,
            "hamiltonian": self.hamiltonian,
        }

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "x_d", "orthogonality", "affine_profile", "depth"])
            for r in self.rows:
                w.writerow([repr(float(v)) for v in r])


def chart_identities_report(chart, n_depths=33, mid_nodes=True):
    """Largest residuals of the tube identities over node and mid-node fibers.

    ``orthogonality`` is ``|grad f_+ . grad f_-|`` with ``grad Phi`` taken from
    the interpolated Phi; ``affine_profile`` is ``|f(Psi(z, x_d)) - f(z) + x_d|``;
    ``depth`` is ``|f_-(Psi(z, x_d)) - x_d|``.  The two boundary identities
    are ``|jac(z, 0) dn f(z) - 1|`` and ``|G_dd(z, 0) dn f(z)^2 - 1|``.
    """
    p, bq = chart.potential, chart.bq
    theta = bq.theta
    if mid_nodes:
        theta = np.concatenate([theta, theta + np.pi / len(bq.theta)])
    xd = np.linspace(0.0, chart.delta, n_depths)
    th, tt = _integrate_fibers(p, chart.field, theta, xd)
    X = chart.field.position(th, tt)
    Xth = chart.field.position(th, tt, dth=1)
    Xt = 2 * chart.field.momentum(th, tt)
    det = Xth[..., 0] * Xt[..., 1] - Xth[..., 1] * Xt[..., 0]
    dphi_th = chart.field.phi(th, tt, dth=1)
    dphi_t = chart.field.phi(th, tt, dt=1)
    # grad Phi = J^{-T} (dPhi/dtheta, dPhi/dt)
    gx = (Xt[..., 1] * dphi_th - Xth[..., 1] * dphi_t) / det
    gy = (-Xt[..., 0] * dphi_th + Xth[..., 0] * dphi_t) / det
    g = p.grad(X)
    orth = 0.25 * np.abs(gx * gx + gy * gy - np.sum(g * g, axis=-1))
    fz = p.value(chart.bq.parametrization.point(theta))
    affine = np.abs(p.value(X) - (fz[:, None] - xd[None, :]))
    depth = np.abs(0.5 * (chart.field.phi(th, tt) - p.value(X)) - xd[None, :])

    dn = np.sum(p.grad(bq.nodes) * bq.normals, axis=-1)
    jac0 = np.abs(chart.jac_nodes[:, 0] * dn - 1)
    gdd0 = np.abs(chart.gdd_nodes[:, 0] * dn**2 - 1)
    rows = [
        (theta[i], xd[j], orth[i, j], affine[i, j], depth[i, j])
        for i in range(len(theta)) for j in range(len(xd))
    ]
    return ChartDiagnostics(
        orthogonality=float(orth.max()),
        affine_profile=float(affine.max()),
        depth=float(depth.max()),
        jacobian_boundary=float(jac0.max()),
        metric_boundary=float(gdd0.max()),
        hamiltonian=float(chart.h_drift),
        rows=rows,
    )
