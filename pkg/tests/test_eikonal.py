import numpy as np
import pytest

from kramers_exit.domain import build_boundary_quadrature
from kramers_exit.eikonal import (
    build_chart,
    chart_identities_report,
    check_chart,
    initial_momentum,
    largest_delta,
    shoot_ray,
)
from kramers_exit.errors import ChartMismatch, RayCrossing


@pytest.fixture(scope="module")
def radial_chart(radial):
    return build_chart(radial.p, radial.dom, build_boundary_quadrature(radial.dom, 64))


def test_reflected_momentum_has_equal_length(aniso):
    z = aniso.bq.nodes[::17]
    p0, dn = initial_momentum(aniso.p, aniso.dom, z)
    assert np.all(dn > 0)
    g = aniso.p.grad(z)
    np.testing.assert_allclose(np.sum(p0 * p0, -1), np.sum(g * g, -1), rtol=1e-14)
    # the ray enters D
    assert np.all(np.sum(p0 * aniso.bq.normals[::17], -1) < 0)


def test_radial_ray_is_explicit(radial):
    # x(t) = z e^{-2t}, hence f_-(x(t)) = (1 - e^{-4t}) / 2
    z = np.array([0.6, 0.8])
    ray = shoot_ray(radial.p, radial.dom, z, 0.3)
    np.testing.assert_allclose(ray.x, z * np.exp(-2 * ray.t)[:, None], atol=1e-10)
    np.testing.assert_allclose(ray.f_minus, 0.5 * (1 - np.exp(-4 * ray.t)), atol=1e-10)
    assert ray.h_drift < 1e-9


def test_radial_depth_limit(radial):
    dmax, cause, _, _ = largest_delta(radial.p, radial.dom, build_boundary_quadrature(radial.dom, 32))
    assert dmax == pytest.approx(0.5, abs=2e-3)


def test_radial_chart_closed_forms(radial_chart):
    c = radial_chart
    np.testing.assert_allclose(c.chi_nodes, np.broadcast_to(1 - 2 * c.xd, c.chi_nodes.shape), atol=1e-7)
    z = c.bq.nodes
    expect = np.sqrt(1 - 2 * c.xd)[None, :, None] * z[:, None, :]
    np.testing.assert_allclose(c.psi_nodes, expect, atol=1e-7)
    # off-node evaluation
    th = np.array([0.1, 2.0])
    np.testing.assert_allclose(c.chi(th, 0.1), 0.8, atol=1e-7)


def test_identities_small(radial_chart, aniso):
    r = chart_identities_report(radial_chart)
    for v in r.as_dict().values():
        assert v < 1e-5
    ca = build_chart(aniso.p, aniso.dom, build_boundary_quadrature(aniso.dom, 64))
    ra = chart_identities_report(ca, mid_nodes=False)
    assert ra.orthogonality < 1e-4 and ra.jacobian_boundary < 1e-12
    assert 0 < ca.delta < ca.delta_max


def test_diagnostics_csv(radial_chart, tmp_path):
    r = chart_identities_report(radial_chart, n_depths=5, mid_nodes=False)
    path = tmp_path / "d.csv"
    r.write_csv(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + 5 * len(radial_chart.theta)


def test_chart_rejects_excess_depth(radial):
    with pytest.raises(RayCrossing):
        build_chart(radial.p, radial.dom, build_boundary_quadrature(radial.dom, 32), delta=0.6)


def test_chart_mismatch(radial_chart):
    check_chart(radial_chart, radial_chart.delta)
    with pytest.raises(ChartMismatch):
        check_chart(radial_chart, radial_chart.delta * 0.9)
