import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kramers_exit.asymptotics import (
    BoundaryMinimum,
    boundary_laplace_integral,
    constant_boundary_mean_exit,
    find_boundary_minima,
    morse_boundary_mean_exit,
    sharp_mean_exit,
)
from kramers_exit.errors import InconsistentMinima, NotConstantBoundary

eps_st = st.floats(0.02, 1.0)


@settings(max_examples=25, deadline=None)
@given(eps_st)
def test_radial_closed_form(radial, eps):
    # (2 pi eps) e^{1/2eps} / (2 pi)  for |x|^2/2 on the unit disk
    pred = sharp_mean_exit(radial.p, radial.dom, radial.bq, radial.x0, eps)
    assert pred.log_mean_exit == pytest.approx(math.log(eps) + 0.5 / eps, rel=1e-13)
    assert pred.eigenvalue * pred.mean_exit == pytest.approx(1.0)


def test_no_underflow_at_tiny_eps(radial):
    eps = 1e-3
    pred = sharp_mean_exit(radial.p, radial.dom, radial.bq, radial.x0, eps)
    assert math.isinf(pred.mean_exit) or pred.mean_exit > 1e200
    assert pred.log_mean_exit == pytest.approx(math.log(eps) + 500.0)
    li = boundary_laplace_integral(radial.p, radial.bq, eps)
    assert li.log_value == pytest.approx(math.log(2 * math.pi) - 500.0)


def test_constant_boundary_needs_constant_f(radial, aniso):
    lap = constant_boundary_mean_exit(radial.p, radial.bq, radial.x0, 0.5, 0.1)
    gen = sharp_mean_exit(radial.p, radial.dom, radial.bq, radial.x0, 0.1)
    assert lap.log_mean_exit == pytest.approx(gen.log_mean_exit, rel=1e-14)
    with pytest.raises(NotConstantBoundary):
        constant_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, 0.5, 0.1)


def test_boundary_minima_of_anisotropic_well(aniso):
    # f = 1/2 + sin^2(t)/2 on the circle: minima at t = 0, pi, d_tt f = 1, dn f = 1
    mins = find_boundary_minima(aniso.p, aniso.bq)
    assert len(mins) == 2
    np.testing.assert_allclose(sorted(m.theta for m in mins), [0.0, math.pi], atol=1e-9)
    for m in mins:
        assert m.f_value == pytest.approx(0.5, abs=1e-14)
        assert m.normal_derivative == pytest.approx(1.0, rel=1e-12)
        assert m.tangential_hessian_det == pytest.approx(1.0, rel=1e-8)


@pytest.mark.parametrize("eps", [0.2, 0.05, 0.01])
def test_morse_formula_value(aniso, eps):
    mins = find_boundary_minima(aniso.p, aniso.bq)
    pred = morse_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, mins, eps)
    ref = math.sqrt(2 * math.pi * eps) * math.exp(0.5 / eps) / (math.sqrt(2.0) * 2.0)
    assert pred.mean_exit == pytest.approx(ref, rel=1e-8)


def test_morse_ratio_tends_to_one(aniso):
    mins = find_boundary_minima(aniso.p, aniso.bq)
    dev = []
    for eps in (0.2, 0.05, 0.01, 0.001):
        g = sharp_mean_exit(aniso.p, aniso.dom, aniso.bq, aniso.x0, eps)
        m = morse_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, mins, eps)
        dev.append(abs(math.expm1(m.log_mean_exit - g.log_mean_exit)))
    assert dev == sorted(dev, reverse=True)
    assert dev[-1] < 2e-3


def test_morse_input_validation(aniso):
    z = np.array([1.0, 0.0])
    with pytest.raises(InconsistentMinima):
        morse_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, [], 0.1)
    bad = [BoundaryMinimum(z, 0.0, 0.5, 1.0, 1.0), BoundaryMinimum(-z, math.pi, 0.6, 1.0, 1.0)]
    with pytest.raises(InconsistentMinima):
        morse_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, bad, 0.1)
    with pytest.raises(InconsistentMinima):
        morse_boundary_mean_exit(aniso.p, aniso.bq, aniso.x0, [BoundaryMinimum(z, 0.0, 0.5, 1.0, 0.0)], 0.1)
