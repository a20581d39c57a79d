import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from kramers_exit.capacity import CapacitorConfig
from kramers_exit.domain import disk, ellipse
from kramers_exit.errors import PecletError
from kramers_exit.pde import (
    Grid2D,
    PecletWarning,
    assemble,
    dirichlet_form,
    smallest_eigenvalue,
    solve_equilibrium_potential,
    solve_mean_exit,
)
from kramers_exit.potential import anisotropic_quadratic, isotropic_quadratic


def test_anchor_is_a_node():
    g = Grid2D(disk(), 0.1, anchor=(0.013, -0.02))
    i = g.node_of((0.013, -0.02))
    np.testing.assert_allclose(g.nodes[i], [0.013, -0.02])
    with pytest.raises(ValueError):
        g.node_of((0.05, -0.02))


def test_cut_arms_land_on_boundary():
    g = Grid2D(ellipse(1.2, 0.8), 0.05)
    cut = g.nbr < 0
    phi = g.domain.phi.value(g.bpoint[cut])
    assert np.max(np.abs(phi)) < 1e-12
    assert np.all((g.arm > 0) & (g.arm <= g.h))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.5, 3.0))
def test_rows_kill_constants(eps, k2):
    op = assemble(anisotropic_quadratic((1.0, k2)), Grid2D(disk(), 1 / 16), eps)
    # L 1 = 0: row sums equal the couplings to the boundary
    ones = np.ones(op.grid.n)
    bsum = np.sum(np.where(op.grid.nbr < 0, op.coupling, 0.0), axis=0)
    np.testing.assert_allclose(op.matrix @ ones, bsum, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("eps", [0.05, 0.2])
def test_staircase_operator_is_weighted_symmetric(eps):
    op = assemble(anisotropic_quadratic((1.0, 2.0)), Grid2D(disk(), 1 / 32, cut="staircase"), eps)
    W = sp.diags(op.weights)
    S = W @ op.matrix
    assert abs(S - S.T).max() <= 1e-12 * abs(S).max()


def test_mean_exit_matches_radial_oracle():
    p = isotropic_quadratic()
    op = assemble(p, Grid2D(disk(), 1 / 64), 0.2)
    u = solve_mean_exit(op)
    ref = [oracles.radial_mean_exit(r, 0.2) for r in (0.0, 0.5)]
    assert u.at_node((0, 0)) == pytest.approx(ref[0], rel=2e-3)
    assert u(np.array([0.5, 0.0])) == pytest.approx(ref[1], rel=5e-3)
    assert np.all(u.values > 0)


def test_eigenvalue_matches_radial_oracle():
    p = isotropic_quadratic()
    op = assemble(p, Grid2D(disk(), 1 / 64), 0.2)
    lam, phi = smallest_eigenvalue(op)
    assert lam == pytest.approx(oracles.radial_eigenvalue(0.2), rel=2e-3)
    assert np.all(phi.values > 0)
    assert op.weighted_inner(phi.values, phi.values) == pytest.approx(1.0)


def test_peclet_guards():
    p = isotropic_quadratic()
    with pytest.warns(PecletWarning):
        op = assemble(p, Grid2D(disk(), 0.2), 0.08)
    assert 1 < op.peclet <= 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PecletWarning)
        op = assemble(p, Grid2D(disk(), 0.25), 0.05)
    with pytest.raises(PecletError):
        smallest_eigenvalue(op)


def test_equilibrium_potential_and_capacity():
    eps, r0 = 0.15, 0.25
    cap = CapacitorConfig((0.0, 0.0), r0, 0.2)
    p = isotropic_quadratic()
    grid = Grid2D(disk(), 1 / 128, capacitor=cap)
    op = assemble(p, grid, eps)
    h = solve_equilibrium_potential(op)
    assert h.excursion < 1e-8
    assert h(np.array([0.6, 0.0])) == pytest.approx(oracles.radial_equilibrium_potential(0.6, r0, eps), abs=2e-3)
    total, parts = dirichlet_form(op, h, 0.5)
    # boundary integral with the shift 0.5 removed is 2 pi
    assert total / (2 * np.pi) == pytest.approx(oracles.radial_capacity_ratio(r0, eps), rel=5e-3)
    assert parts["boundary_edges"] > 0 and parts["bulk"] > 0
    with pytest.raises(ValueError):
        solve_mean_exit(op)


def test_rebuild_with_capacitor():
    p = isotropic_quadratic()
    op = assemble(p, Grid2D(disk(), 1 / 32), 0.2)
    h = solve_equilibrium_potential(op, CapacitorConfig((0.0, 0.0), 0.3, 0.2))
    assert h.operator.grid.capacitor is not None
    with pytest.raises(ValueError):
        solve_equilibrium_potential(op)


def test_field_csv(tmp_path):
    op = assemble(isotropic_quadratic(), Grid2D(disk(), 0.25), 0.5)
    u = solve_mean_exit(op)
    u.write_csv(tmp_path / "u.csv")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "x,y,mean_exit" and len(rows) == op.grid.n + 1


def test_grid_convergence_and_maximum_principle():
    p = isotropic_quadratic()
    exact = oracles.radial_mean_exit(0.0, 0.2)
    errs = []
    for h in (1 / 32, 1 / 64):
        u = solve_mean_exit(assemble(p, Grid2D(disk(), h), 0.2))
        errs.append(abs(u.at_node((0, 0)) / exact - 1))
        assert u.values.min() > 0 and u.array[u.grid.exterior].max() == 0
    assert errs[0] >= 1.5 * errs[1]


def test_leveling_profile_matches_oracle():
    # relative drop of u between r = 0 and r = 0.4 at eps = 0.1 (about 2.6%)
    p, eps = isotropic_quadratic(), 0.1
    u = solve_mean_exit(assemble(p, Grid2D(disk(), 1 / 64), eps))
    drop = 1 - u.at_node((0.40625, 0.0)) / u.at_node((0, 0))
    ref = 1 - oracles.radial_mean_exit(0.40625, eps) / oracles.radial_mean_exit(0.0, eps)
    assert drop == pytest.approx(ref, rel=0.02)


def test_eigenvalue_slope_matches_oracle():
    p = isotropic_quadratic()
    x = np.array([1 / 0.1, 1 / 0.15, 1 / 0.2])
    lam = [smallest_eigenvalue(assemble(p, Grid2D(disk(), 1 / 64), 1 / v))[0] for v in x]
    ref = [oracles.radial_eigenvalue(1 / v) for v in x]
    s, s_ref = np.polyfit(x, np.log(lam), 1)[0], np.polyfit(x, np.log(ref), 1)[0]
    assert s == pytest.approx(s_ref, rel=1e-2)
    # the exponent -1/2 emerges once the 1/eps prefactor is divided out
    assert np.polyfit(x, np.log(np.array(lam) / x), 1)[0] == pytest.approx(-0.5, rel=0.1)
