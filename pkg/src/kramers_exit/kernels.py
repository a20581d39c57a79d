"""Backend selection for the Monte Carlo hot loop.

The compiled extension is used when it was built and both the potential and
the level set are two-dimensional polynomials; everything else goes through
the vectorised NumPy kernel.  Set ``KRAMERS_EXIT_PURE_PYTHON=1`` before import
to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("KRAMERS_EXIT_PURE_PYTHON") == "1":
        raise ImportError("pure-Python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKEND = "compiled" if _ckernels is not None else "python"


def _grid(c):
    return np.ascontiguousarray(c, dtype=float)


def _derivative_grids(c):
    c = _grid(c)
    nx, ny = c.shape
    cx = np.zeros((max(nx - 1, 1), ny))
    cy = np.zeros((nx, max(ny - 1, 1)))
    for i in range(1, nx):
        cx[i - 1] = i * c[i]
    for j in range(1, ny):
        cy[:, j - 1] = j * c[:, j]
    return _grid(cx), _grid(cy)


def polynomial_grids(potential, domain):
    """Coefficient grids (fx, fy, phi, phix, phiy) or None if unavailable."""
    cf = potential.coefficient_grid()
    cphi = domain.phi.coefficient_grid() if hasattr(domain.phi, "coefficient_grid") else None
    if cf is None or cphi is None:
        return None
    fx, fy = _derivative_grids(cf)
    phix, phiy = _derivative_grids(cphi)
    return fx, fy, _grid(cphi), phix, phiy


def _callable_fields(potential, domain):
    def grad_f(x, y):
        g = potential.grad(np.stack([x, y], axis=-1))
        return g[..., 0], g[..., 1]

    def phi(x, y):
        return domain.phi.value(np.stack([x, y], axis=-1))

    def grad_phi(x, y):
        g = domain.phi.grad(np.stack([x, y], axis=-1))
        return g[..., 0], g[..., 1]

    return grad_f, phi, grad_phi


def resolve_backend(potential, domain, backend=None):
    backend = backend or BACKEND
    if backend not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and (_ckernels is None or polynomial_grids(potential, domain) is None):
        backend = "python"
    return backend


def run_paths(potential, domain, start, epsilon, dt, max_steps, seed, first_path, n_paths,
              bridge=False, ball=None, backend=None):
    """Dispatch one contiguous block of paths to the chosen kernel."""
    backend = resolve_backend(potential, domain, backend)
    bx, by, br = (0.0, 0.0, -1.0) if ball is None else (float(ball[0][0]), float(ball[0][1]), float(ball[1]))
    args = (float(start[0]), float(start[1]), float(epsilon), float(dt), int(max_steps),
            int(seed) & ((1 << 64) - 1), int(first_path), int(n_paths), bool(bridge), bx, by, br)
    if backend == "compiled":
        return _ckernels.run_paths(*polynomial_grids(potential, domain), *args)
    grids = polynomial_grids(potential, domain)
    fields = _pykernels.polynomial_fields(*grids) if grids is not None else _callable_fields(potential, domain)
    return _pykernels.run_paths(*fields, *args)
