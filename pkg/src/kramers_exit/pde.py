"""Finite differences for the generator ``L = -eps Lap + grad f . grad`` on an
embedded 2D domain.

Each interior node couples to its four axis neighbours through

    c_k = 2 eps / (a_k (a_k + b_k)) * exp(-(f_k - f_i) / (2 eps)),

where ``a_k`` is the (possibly cut) arm towards neighbour k and ``b_k`` the
opposite arm.  The exponential factor is the central transport term written
in Boltzmann-symmetric form, so ``(L u)_i = sum_k c_k (u_i - u_k)`` kills
constants and, with equal arms, satisfies
``w_i c_ik = w_k c_ki`` for ``w = exp(-f / eps)``.  Cut arms use the
Shortley-Weller distances to the boundary or to the capacitor sphere.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import bicgstab, spilu, splu, LinearOperator

from .errors import DimensionUnsupported, IterationStall, PecletError, SolverDivergence

RESIDUAL_TOL = 1e-10
DIRECT_LIMIT = 1_000_000
PECLET_WARN = 1.0
PECLET_REFUSE = 2.0
CLIP_TOL = 1e-8

# +x, -x, +y, -y
DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
OPPOSITE = np.array([1, 0, 3, 2])


class PecletWarning(UserWarning):
    pass


def _bisect_crossing(phi, start, step, h, iters=60):
    """Distance s in (0, h] where phi(start + s * step) changes sign."""
    lo = np.zeros(len(start))
    hi = np.full(len(start), h)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = phi(start + mid[:, None] * step) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return hi


def _sphere_crossing(start, step, center, radius):
    """Smallest s > 0 with |start + s step - center| = radius (start outside)."""
    d = start - center
    b = np.sum(d * step, axis=-1)
    c = np.sum(d * d, axis=-1) - radius**2
    disc = np.maximum(b * b - c, 0.0)
    return -b - np.sqrt(disc)


class Grid2D:
    """Uniform grid of spacing ``h`` with a node exactly at ``anchor``.

    Parameters
    ----------
    domain : Domain
    h : float
    anchor : array_like, optional
        Grid origin; defaults to the domain center.
    capacitor : CapacitorConfig, optional
        Ball held at value 1 (equilibrium-potential problems).
    cut : {"shortley-weller", "staircase"}
        Boundary treatment.  ``"staircase"`` uses full arms to the first
        exterior node, which keeps the stencil uniform.
    """

    def __init__(self, domain, h, anchor=None, capacitor=None, cut="shortley-weller"):
        if domain.dim != 2:
            raise DimensionUnsupported("finite differences are implemented for d = 2")
        if cut not in ("shortley-weller", "staircase"):
            raise ValueError(f"unknown boundary treatment {cut!r}")
        self.domain = domain
        self.h = float(h)
        self.cut = cut
        self.capacitor = capacitor
        self.anchor = np.asarray(domain.center if anchor is None else anchor, dtype=float)
        box = domain.bounding_box
        lo = np.floor((box[:, 0] - self.anchor) / self.h) - 1
        hi = np.ceil((box[:, 1] - self.anchor) / self.h) + 1
        self.x = self.anchor[0] + self.h * np.arange(lo[0], hi[0] + 1)
        self.y = self.anchor[1] + self.h * np.arange(lo[1], hi[1] + 1)
        self.shape = (len(self.y), len(self.x))
        X, Y = np.meshgrid(self.x, self.y)
        self.points = np.stack([X, Y], axis=-1)
        self.phi = domain.phi.value(self.points)

        inside = self.phi < 0
        cap = np.zeros(self.shape, dtype=bool)
        if capacitor is not None:
            c = np.asarray(capacitor.center, dtype=float)
            cap = np.sum((self.points - c) ** 2, axis=-1) <= capacitor.radius**2
            if np.any(cap & ~inside):
                raise ValueError("capacitor ball is not contained in the domain")
            if not cap.any():
                raise ValueError("no grid node lies in the capacitor; refine the grid")
        self.capacitor_mask = cap
        self.interior = inside & ~cap
        self.exterior = ~inside
        self.index = -np.ones(self.shape, dtype=np.int64)
        self.index[self.interior] = np.arange(int(self.interior.sum()))
        self.n = int(self.interior.sum())
        self._arms()

    def _arms(self):
        rows, cols = np.nonzero(self.interior)
        self.rows, self.cols = rows, cols
        n, h = self.n, self.h
        self.arm = np.full((4, n), h)
        self.nbr = -np.ones((4, n), dtype=np.int64)
        self.bvalue = np.zeros((4, n))
        self.bpoint = np.zeros((4, n, 2))
        base = self.points[rows, cols]
        for k, (dx, dy) in enumerate(DIRECTIONS):
            r, c = rows + dy, cols + dx
            self.nbr[k] = self.index[r, c]
            self.bpoint[k] = self.points[r, c]
            cut = self.nbr[k] < 0
            if not cut.any():
                continue
            step = np.array([dx, dy], dtype=float)
            is_cap = self.capacitor_mask[r, c] & cut
            is_ext = self.exterior[r, c] & cut
            self.bvalue[k, is_cap] = 1.0
            if self.cut == "staircase":
                continue
            if is_ext.any():
                s = _bisect_crossing(self.domain.phi.value, base[is_ext], step, h)
                self.arm[k, is_ext] = s
                self.bpoint[k, is_ext] = base[is_ext] + s[:, None] * step
            if is_cap.any():
                s = _sphere_crossing(base[is_cap], step, np.asarray(self.capacitor.center, float), self.capacitor.radius)
                s = np.clip(s, 1e-12 * h, h)
                self.arm[k, is_cap] = s
                self.bpoint[k, is_cap] = base[is_cap] + s[:, None] * step

    @property
    def nodes(self):
        return self.points[self.rows, self.cols]

    def full(self, values):
        """Embed unknowns into a grid array with the Dirichlet data filled in."""
        out = np.zeros(self.shape)
        out[self.capacitor_mask] = 1.0
        out[self.interior] = values
        return out

    def node_of(self, x):
        """Unknown index of the grid node at ``x`` (must be a node)."""
        x = np.asarray(x, dtype=float)
        j = int(round((x[0] - self.x[0]) / self.h))
        i = int(round((x[1] - self.y[0]) / self.h))
        if abs(self.x[j] - x[0]) > 1e-9 * self.h or abs(self.y[i] - x[1]) > 1e-9 * self.h:
            raise ValueError(f"{x} is not a grid node")
        return int(self.index[i, j])


@dataclass
class DiscreteOperator:
    grid: Grid2D
    potential: object
    epsilon: float
    matrix: sp.csr_matrix
    coupling: np.ndarray
    f_nodes: np.ndarray
    f_shift: float
    log_weights: np.ndarray
    dirichlet_rhs: np.ndarray
    peclet: float

    @property
    def weights(self):
        return np.exp(self.log_weights)

    def weighted_inner(self, u, v):
        return float(np.sum(u * v * self.weights) * self.grid.h**2)


def assemble(p, grid, epsilon):
    """Sparse matrix of the generator with Dirichlet elimination."""
    eps = float(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    n = grid.n
    fi = p.value(grid.nodes)
    fk = p.value(grid.bpoint)
    opp_arm = grid.arm[OPPOSITE]
    coupling = 2 * eps / (grid.arm * (grid.arm + opp_arm)) * np.exp(-(fk - fi[None]) / (2 * eps))
    diag = coupling.sum(axis=0)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [diag]
    for k in range(4):
        m = grid.nbr[k] >= 0
        rows.append(np.flatnonzero(m))
        cols.append(grid.nbr[k, m])
        vals.append(-coupling[k, m])
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    rhs = np.sum(np.where(grid.nbr < 0, coupling * grid.bvalue, 0.0), axis=0)
    gmax = float(np.max(np.linalg.norm(p.grad(grid.nodes), axis=-1))) if n else 0.0
    peclet = grid.h * gmax / (2 * eps)
    if peclet > PECLET_WARN:
        warnings.warn(f"grid Peclet number {peclet:.2f} exceeds {PECLET_WARN}", PecletWarning, stacklevel=2)
    shift = float(np.min(fi))
    return DiscreteOperator(
        grid=grid, potential=p, epsilon=eps, matrix=A, coupling=coupling, f_nodes=fi,
        f_shift=shift, log_weights=-(fi - shift) / eps, dirichlet_rhs=rhs, peclet=peclet,
    )


def _solve(A, b):
    if A.shape[0] <= DIRECT_LIMIT:
        lu = splu(A.tocsc())
        x = lu.solve(b)
        # the exponential couplings make A badly scaled at small eps
        for _ in range(3):
            r = b - A @ x
            if _backward_error(A, x, b) <= 0.1 * RESIDUAL_TOL:
                break
            x += lu.solve(r)
    else:
        ilu = spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = LinearOperator(A.shape, ilu.solve)
        x, info = bicgstab(A, b, M=M, rtol=RESIDUAL_TOL, maxiter=5000)
        if info != 0:
            raise SolverDivergence(f"bicgstab stopped with info = {info}")
    res = _backward_error(A, x, b)
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise SolverDivergence(f"relative residual {res:.3e} above {RESIDUAL_TOL}")
    return x


def _backward_error(A, x, b):
    """Normwise relative residual ``|b - A x| / (|A| |x| + |b|)`` in max norms."""
    a_norm = float(abs(A).sum(axis=1).max())
    den = a_norm * np.max(np.abs(x)) + np.max(np.abs(b))
    return float(np.max(np.abs(b - A @ x)) / max(den, 1e-300))


class NodalField:
    """Grid field with Dirichlet data filled in and bilinear evaluation."""

    def __init__(self, grid, values, name="u"):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self.name = name
        self.array = grid.full(self.values)
        self._interp = RegularGridInterpolator((grid.y, grid.x), self.array, bounds_error=False, fill_value=0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self._interp(np.stack([x[..., 1], x[..., 0]], axis=-1))

    def at_node(self, x):
        return float(self.values[self.grid.node_of(x)])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", self.name])
            for i, j in zip(self.grid.rows, self.grid.cols):
                w.writerow([repr(float(self.grid.x[j])), repr(float(self.grid.y[i])), repr(float(self.array[i, j]))])


def solve_mean_exit(op):
    """``L u = 1`` in D with ``u = 0`` on the boundary."""
    if op.grid.capacitor is not None:
        raise ValueError("mean exit time needs a grid without capacitor")
    u = _solve(op.matrix, np.ones(op.grid.n) + op.dirichlet_rhs)
    return NodalField(op.grid, u, "mean_exit")


def solve_equilibrium_potential(op, cfg=None):
    """``L h = 0`` between the capacitor (h = 1) and the boundary (h = 0).

    With ``cfg`` given, the operator's grid is rebuilt around that capacitor.
    Returns the field and the largest clipped excursion outside [0, 1].
    """
    if cfg is not None and op.grid.capacitor is not cfg:
        g = op.grid
        grid = Grid2D(g.domain, g.h, anchor=g.anchor, capacitor=cfg, cut=g.cut)
        op = assemble(op.potential, grid, op.epsilon)
    if op.grid.capacitor is None:
        raise ValueError("equilibrium potential needs a capacitor")
    h = _solve(op.matrix, op.dirichlet_rhs)
    excursion = float(max(0.0, -h.min(), h.max() - 1.0))
    if excursion > CLIP_TOL:
        warnings.warn(f"equilibrium potential left [0, 1] by {excursion:.2e}", stacklevel=2)
    field = NodalField(op.grid, np.clip(h, 0.0, 1.0), "equilibrium_potential")
    field.excursion = excursion
    field.operator = op
    return field


def smallest_eigenvalue(op, max_iters=500, tol=1e-10, anchor=None):
    """Principal Dirichlet eigenpair by inverse power iteration.

    The Rayleigh quotient and normalisation use the weighted product
    ``<u, v>_w = sum u v exp(-f / eps) h^2``.
    """
    if op.peclet > PECLET_REFUSE:
        raise PecletError(f"grid Peclet number {op.peclet:.2f} exceeds {PECLET_REFUSE}; refine the grid")
    A = op.matrix
    lu = splu(A.tocsc())
    x = np.ones(op.grid.n)
    lam_old = math.inf
    for it in range(1, max_iters + 1):
        y = lu.solve(x)
        y /= math.sqrt(op.weighted_inner(y, y))
        lam = op.weighted_inner(A @ y, y)
        x = y
        if abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
    else:
        raise IterationStall(f"inverse iteration did not settle in {max_iters} steps")
    ref = op.grid.node_of(op.grid.anchor if anchor is None else anchor)
    if x[ref] < 0:
        x = -x
    field = NodalField(op.grid, x, "eigenfunction")
    field.iterations = it
    return float(lam), field


def dirichlet_form(op, field, shift):
    """``eps * int |grad h|^2 exp(-(f - shift) / eps)`` by edge midpoints.

    Each edge of length ``l`` carries ``(dh / l)^2`` over an area ``l * h``.
    Returns the total and its split into edges cut by the outer boundary and
    all other edges.
    """
    g, p, eps = op.grid, op.potential, op.epsilon
    vals = field.values
    base = g.nodes
    total_bulk = 0.0
    total_edge = 0.0
    for k in range(4):
        nb = g.nbr[k]
        own = nb < 0
        # interior-interior edges are visited from both ends; keep +x and +y only
        inner = (nb >= 0) & (k in (0, 2))
        other = np.where(nb >= 0, vals[np.maximum(nb, 0)], g.bvalue[k])
        arm = g.arm[k]
        mid = base + 0.5 * arm[:, None] * DIRECTIONS[k]
        e = eps * np.exp(-(p.value(mid) - shift) / eps) * (vals - other) ** 2 * g.h / arm
        touches = own & (g.bvalue[k] == 0)
        total_edge += float(np.sum(e[touches]))
        total_bulk += float(np.sum(e[inner | (own & ~touches)]))
    return total_bulk + total_edge, {"boundary_edges": total_edge, "bulk": total_bulk}
