"""Mean exit times from a single potential well: sharp small-temperature
asymptotics checked against Monte Carlo, finite differences and capacity
bounds."""

__version__ = "0.1.0"

from .asymptotics import (  # noqa: E402
    SharpPrediction,
    constant_boundary_mean_exit,
    find_boundary_minima,
    morse_boundary_mean_exit,
    sharp_mean_exit,
)
from .domain import build_boundary_quadrature, disk, ellipse, make_domain, verify_hypothesis  # noqa: E402
from .potential import classify, find_critical_points, make_potential  # noqa: E402

__all__ = [
    "SharpPrediction",
    "build_boundary_quadrature",
    "classify",
    "constant_boundary_mean_exit",
    "disk",
    "ellipse",
    "find_boundary_minima",
    "find_critical_points",
    "make_domain",
    "make_potential",
    "morse_boundary_mean_exit",
    "sharp_mean_exit",
    "verify_hypothesis",
]
