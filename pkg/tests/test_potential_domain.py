import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kramers_exit.domain import (
    build_boundary_quadrature,
    disk,
    ellipse,
    level_set,
    make_domain,
    verify_hypothesis,
)
from kramers_exit.errors import DegenerateGradient, NotCritical
from kramers_exit.potential import (
    FunctionPotential,
    anisotropic_quadratic,
    classify,
    double_well,
    fd_check,
    find_critical_points,
    isotropic_quadratic,
    make_potential,
    polynomial,
)

coef = st.floats(-3, 3, allow_nan=False)
point = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), coef, min_size=1, max_size=6), point)
def test_polynomial_derivatives_match_differences(terms, x):
    p = polynomial(terms, dim=2)
    eg, eh = fd_check(p, [x], h=1e-5)
    assert eg < 1e-6 * (1 + sum(abs(c) for c in terms.values())) * 10
    assert eh < 1e-5 * (1 + sum(abs(c) for c in terms.values())) * 10


@settings(max_examples=30, deadline=None)
@given(point, st.floats(-2, 2))
def test_shift_changes_value_only(x, c):
    p = anisotropic_quadratic((1.0, 3.0))
    q = p.shifted(c)
    assert q.value(np.array(x)) == pytest.approx(p.value(np.array(x)) + c, abs=1e-12)
    np.testing.assert_allclose(q.grad(np.array(x)), p.grad(np.array(x)))


def test_polynomial_string_keys_and_vectorised_eval():
    p = polynomial({"2,0": 0.5, "0,2": 1.0})
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    np.testing.assert_allclose(p.value(x), [4.5, 1.125])
    assert p.hess(x).shape == (2, 2, 2)


def test_function_potential_uses_finite_differences():
    p = FunctionPotential(lambda x: np.sum(x**2, axis=-1) / 2, dim=2)
    np.testing.assert_allclose(p.grad(np.array([0.3, -0.2])), [0.3, -0.2], atol=1e-7)
    np.testing.assert_allclose(p.hess(np.array([0.3, -0.2])), np.eye(2), atol=1e-5)


def test_classify_minimum_and_saddle():
    c = classify(anisotropic_quadratic((1.0, 2.0)), [0.0, 0.0])
    assert c.is_minimum and c.det_hessian == pytest.approx(2.0)
    s = classify(double_well(), [0.0, 0.0])
    assert not s.is_minimum and s.min_eigenvalue < 0
    with pytest.raises(NotCritical):
        classify(isotropic_quadratic(), [0.1, 0.0])


def test_double_well_critical_points():
    pts = find_critical_points(double_well(), [[-2, 2], [-2, 2]], n_starts=64)
    mins = [c for c in pts if c.is_minimum]
    assert len(mins) == 2
    np.testing.assert_allclose(sorted(abs(c.location[0]) for c in mins), [1.0, 1.0], atol=1e-9)


def test_make_potential_rejects_unknown():
    with pytest.raises(ValueError):
        make_potential("nope")
    with pytest.raises(ValueError):
        make_domain("nope")


@pytest.mark.parametrize("n", [32, 64, 256])
def test_quadrature_perimeter_and_normals(n):
    bq = build_boundary_quadrature(disk(), n)
    assert bq.perimeter == pytest.approx(2 * math.pi, rel=1e-13)
    np.testing.assert_allclose(np.linalg.norm(bq.normals, axis=-1), 1.0)
    np.testing.assert_allclose(bq.normals, bq.nodes, atol=1e-14)


def test_ellipse_perimeter_converges():
    # Ramanujan II is accurate to ~1e-10 here; the trapezoid rule is spectral
    a, b = 1.5, 1.0
    h = ((a - b) / (a + b)) ** 2
    ref = math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
    assert build_boundary_quadrature(ellipse(a, b), 128).perimeter == pytest.approx(ref, rel=1e-8)


def test_traced_level_set_matches_disk():
    dom = level_set({"2,0": 1.0, "0,2": 1.0, "0,0": -1.0}, [[-1.3, 1.3], [-1.3, 1.3]], center=(0, 0))
    bq = build_boundary_quadrature(dom, 128)
    assert bq.perimeter == pytest.approx(2 * math.pi, rel=1e-6)
    np.testing.assert_allclose(np.linalg.norm(bq.nodes, axis=-1), 1.0, atol=1e-12)


def test_domain_checks():
    dom = disk()
    assert dom.check()
    assert dom.contains(np.array([0.5, 0.5]))
    assert not dom.contains(np.array([0.9, 0.9]))
    with pytest.raises(DegenerateGradient):
        dom.signed_measure(np.array([0.0, 0.0]))
    assert np.isfinite(dom.floored_signed_measure(np.array([0.0, 0.0])))


def test_hypothesis_report(radial, aniso):
    assert radial.report.passed and aniso.report.passed
    np.testing.assert_allclose(aniso.x0.location, [0.0, 0.0], atol=1e-10)
    dom = disk(1.5)
    bad = verify_hypothesis(double_well(), dom, build_boundary_quadrature(dom, 128))
    assert not bad.passed and not bad.unique_minimum
    # minimum outside D: the gradient points inward somewhere
    shifted = isotropic_quadratic(center=(2.0, 0.0))
    rep = verify_hypothesis(shifted, disk(), build_boundary_quadrature(disk(), 128))
    assert not rep.passed and rep.normal_derivative_min < 0
    assert set(rep.to_dict()) >= {"passed", "normal_derivative_min", "x0"}
