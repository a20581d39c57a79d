"""Potentials with derivative oracles, and critical point search.

A potential maps points of R^d to energies.  Every method is vectorised over
leading axes: ``value`` takes ``(..., d)`` and returns ``(...)``, ``grad``
returns ``(..., d)`` and ``hess`` returns ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import NoConvergence, NotCritical

NEWTON_TOL = 1e-10
DEDUP_TOL = 1e-6
DEGENERACY_TOL = 1e-8
MAX_NEWTON_ITERS = 50


class Potential:
    """Base class.  Subclasses implement ``value``, ``grad`` and ``hess``."""

    dim: int

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.value(x)

    def coefficient_grid(self):
        """Dense ``C[i, j]`` with f = sum C[i, j] x^i y^j, or None.

        Only two-dimensional polynomials have one; the compiled Monte Carlo
        kernel needs it.
        """
        return None

    def shifted(self, c):
        return _Shifted(self, float(c))


class _Shifted(Potential):
    def __init__(self, base, c):
        self.base = base
        self.c = c
        self.dim = base.dim

    def value(self, x):
        return self.base.value(x) + self.c

    def grad(self, x):
        return self.base.grad(x)

    def hess(self, x):
        return self.base.hess(x)

    def coefficient_grid(self):
        grid = self.base.coefficient_grid()
        if grid is None:
            return None
        grid = grid.copy()
        grid[0, 0] += self.c
        return grid


class PolynomialPotential(Potential):
    """Sum of monomials ``coeff * prod_k x_k**e_k``.

    Parameters
    ----------
    terms : dict
        Maps exponent tuples (length ``dim``) to coefficients.
    """

    def __init__(self, terms, dim=None):
        terms = {tuple(int(e) for e in k): float(v) for k, v in dict(terms).items() if v != 0.0}
        if dim is None:
            if not terms:
                raise ValueError("cannot infer dimension of an empty polynomial")
            dim = len(next(iter(terms)))
        if any(len(k) != dim for k in terms):
            raise ValueError("exponent tuples must all have length dim")
        if any(e < 0 for k in terms for e in k):
            raise ValueError("negative exponents are not polynomial")
        self.dim = dim
        self.terms = terms
        self._exps, self._coef = self._pack(terms, dim)
        self._grad_parts = [self._pack(_diff(terms, k), dim) for k in range(dim)]
        self._hess_parts = [
            [self._pack(_diff(_diff(terms, k), l), dim) for l in range(dim)] for k in range(dim)
        ]

    @staticmethod
    def _pack(terms, dim):
        if not terms:
            return np.zeros((1, dim), dtype=int), np.zeros(1)
        exps = np.array(list(terms.keys()), dtype=int).reshape(-1, dim)
        coef = np.array(list(terms.values()), dtype=float)
        return exps, coef

    @staticmethod
    def _eval(packed, x):
        exps, coef = packed
        x = np.asarray(x, dtype=float)
        mono = np.prod(x[..., None, :] ** exps, axis=-1)
        return mono @ coef

    def value(self, x):
        return self._eval((self._exps, self._coef), x)

    def grad(self, x):
        return np.stack([self._eval(part, x) for part in self._grad_parts], axis=-1)

    def hess(self, x):
        rows = [np.stack([self._eval(part, x) for part in row], axis=-1) for row in self._hess_parts]
        return np.stack(rows, axis=-2)

    def coefficient_grid(self):
        if self.dim != 2:
            return None
        deg_x = max((k[0] for k in self.terms), default=0)
        deg_y = max((k[1] for k in self.terms), default=0)
        grid = np.zeros((deg_x + 1, deg_y + 1))
        for (i, j), c in self.terms.items():
            grid[i, j] += c
        return grid

    def __add__(self, other):
        if isinstance(other, PolynomialPotential):
            merged = dict(self.terms)
            for k, v in other.terms.items():
                merged[k] = merged.get(k, 0.0) + v
            return PolynomialPotential(merged, dim=self.dim)
        if np.isscalar(other):
            key = (0,) * self.dim
            merged = dict(self.terms)
            merged[key] = merged.get(key, 0.0) + float(other)
            return PolynomialPotential(merged, dim=self.dim)
        return NotImplemented

    __radd__ = __add__

    def shifted(self, c):
        return self + float(c)

    def __repr__(self):
        return f"PolynomialPotential({self.terms!r})"


def _diff(terms, k):
    out = {}
    for exps, c in terms.items():
        if exps[k] == 0:
            continue
        new = list(exps)
        new[k] -= 1
        out[tuple(new)] = out.get(tuple(new), 0.0) + c * exps[k]
    return out


class FunctionPotential(Potential):
    """Wraps user callables.  Missing derivatives use centred differences.

    The difference step is ``cbrt(machine eps) * scale``.
    """

    def __init__(self, fun, dim, grad=None, hess=None, scale=1.0):
        self.fun = fun
        self.dim = int(dim)
        self._grad = grad
        self._hess = hess
        self.step = np.cbrt(np.finfo(float).eps) * scale
        self.uses_fd_grad = grad is None
        self.uses_fd_hess = hess is None

    def value(self, x):
        return np.asarray(self.fun(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(x), dtype=float)
        return _fd_jacobian(self.value, x, self.step)

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        H = _fd_jacobian(self.grad, x, self.step)
        return 0.5 * (H + np.swapaxes(H, -1, -2))


def _fd_jacobian(fun, x, h):
    d = x.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((fun(x + e) - fun(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


# built-in potentials -------------------------------------------------------


def isotropic_quadratic(dim=2, k=1.0, center=None):
    """k |x - center|^2 / 2."""
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    terms = {}
    for i in range(dim):
        e2 = [0] * dim
        e2[i] = 2
        e1 = [0] * dim
        e1[i] = 1
        terms[tuple(e2)] = terms.get(tuple(e2), 0.0) + 0.5 * k
        terms[tuple(e1)] = terms.get(tuple(e1), 0.0) - k * center[i]
    terms[(0,) * dim] = 0.5 * k * float(center @ center)
    return PolynomialPotential(terms, dim=dim)


def anisotropic_quadratic(stiffness=(1.0, 2.0), linear=None):
    """sum_i stiffness_i x_i^2 / 2 + linear . x"""
    stiffness = np.asarray(stiffness, dtype=float)
    dim = stiffness.size
    linear = np.zeros(dim) if linear is None else np.asarray(linear, dtype=float)
    terms = {}
    for i in range(dim):
        e2 = [0] * dim
        e2[i] = 2
        terms[tuple(e2)] = 0.5 * stiffness[i]
        if linear[i]:
            e1 = [0] * dim
            e1[i] = 1
            terms[tuple(e1)] = linear[i]
    return PolynomialPotential(terms, dim=dim)


def double_well(a=1.0, b=1.0):
    """(x^2 - a)^2 + b y^2 in two dimensions."""
    return PolynomialPotential({(4, 0): 1.0, (2, 0): -2.0 * a, (0, 0): a * a, (0, 2): b}, dim=2)


def polynomial(terms, dim=None):
    """Build from ``{"i,j": c}`` or ``{(i, j): c}`` mappings."""
    parsed = {}
    for k, v in dict(terms).items():
        if isinstance(k, str):
            k = tuple(int(s) for s in k.replace(" ", "").split(","))
        parsed[tuple(k)] = float(v)
    return PolynomialPotential(parsed, dim=dim)


POTENTIALS = {
    "isotropic_quadratic": isotropic_quadratic,
    "anisotropic_quadratic": anisotropic_quadratic,
    "double_well": double_well,
    "polynomial": polynomial,
}


def make_potential(name, **params):
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None
    return factory(**params)


# critical points -----------------------------------------------------------


@dataclass
class CriticalPoint:
    location: np.ndarray
    value: float
    hessian: np.ndarray
    det_hessian: float
    min_eigenvalue: float
    nondegenerate: bool
    eigenvalues: np.ndarray = field(repr=False, default=None)

    @property
    def is_minimum(self):
        return self.nondegenerate and self.min_eigenvalue > 0


def classify(p, x, newton_tol=NEWTON_TOL, degeneracy_tol=DEGENERACY_TOL):
    """Fill in Hessian data at a critical point ``x``."""
    x = np.asarray(x, dtype=float)
    g = p.grad(x)
    if np.linalg.norm(g) > newton_tol:
        raise NotCritical(f"|grad f| = {np.linalg.norm(g):.3e} exceeds {newton_tol:g} at {x}")
    H = np.asarray(p.hess(x), dtype=float)
    H = 0.5 * (H + H.T)
    evals = np.linalg.eigvalsh(H)
    det = float(np.prod(evals))
    return CriticalPoint(
        location=x,
        value=float(p.value(x)),
        hessian=H,
        det_hessian=det,
        min_eigenvalue=float(evals[0]),
        nondegenerate=abs(det) > degeneracy_tol,
        eigenvalues=evals,
    )


def newton(p, x, tol=NEWTON_TOL, max_iter=MAX_NEWTON_ITERS, history=False):
    """Newton iteration on grad f = 0.

    Returns ``(x, converged, iterates)``; ``iterates`` is empty unless
    ``history`` is set.
    """
    x = np.array(x, dtype=float)
    iterates = [x.copy()] if history else []
    for _ in range(max_iter + 1):
        g = p.grad(x)
        if not np.all(np.isfinite(g)):
            return x, False, iterates
        if np.linalg.norm(g) <= tol:
            return x, True, iterates
        H = p.hess(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        x = x - step
        if history:
            iterates.append(x.copy())
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > 1e8:
            return x, False, iterates
    return x, False, iterates


def find_critical_points(
    p,
    box,
    n_starts=16,
    newton_tol=NEWTON_TOL,
    dedup_tol=DEDUP_TOL,
    degeneracy_tol=DEGENERACY_TOL,
    max_newton_iters=MAX_NEWTON_ITERS,
    keep=None,
):
    """Multi-start Newton search for critical points inside ``box``.

    Starts come from an unscrambled Halton sequence.  ``keep`` is an optional
    predicate restricting which converged points are returned (used for
    interior-only searches).  Points are deduplicated and sorted by value.
    """
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box must be a (d, 2) array of nonempty intervals")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    d = box.shape[0]
    unit = qmc.Halton(d, scramble=False).random(n_starts + 1)[1:]
    starts = box[:, 0] + unit * (box[:, 1] - box[:, 0])

    found = []
    diagnostics = []
    for s in starts:
        x, ok, _ = newton(p, s, tol=newton_tol, max_iter=max_newton_iters)
        diagnostics.append({"start": s.tolist(), "end": x.tolist(), "converged": bool(ok)})
        if not ok:
            continue
        if np.any(x < box[:, 0] - dedup_tol) or np.any(x > box[:, 1] + dedup_tol):
            continue
        if keep is not None and not keep(x):
            continue
        if any(np.linalg.norm(x - y) <= dedup_tol for y in found):
            continue
        found.append(x)
    if not any(item["converged"] for item in diagnostics):
        raise NoConvergence(f"no Newton start converged within {max_newton_iters} iterations", diagnostics)
    points = [classify(p, x, newton_tol=newton_tol, degeneracy_tol=degeneracy_tol) for x in found]
    points.sort(key=lambda c: (c.value, *c.location))
    return points


def fd_check(p, points, h=1e-4):
    """Largest centred-difference discrepancies of grad and hess at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    g_fd = _fd_jacobian(p.value, points, h)
    H_fd = _fd_jacobian(p.grad, points, h)
    return (
        float(np.max(np.abs(p.grad(points) - g_fd))),
        float(np.max(np.abs(p.hess(points) - H_fd))),
    )

