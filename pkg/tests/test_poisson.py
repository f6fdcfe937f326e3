import math

import numpy as np
import pytest

from inn.grid import DomainError, PatchScheme, ProductGrid, build_uniform_grid
from inn.model import FullModel
from inn.solver import (
    EnergyConfig,
    PoissonProblem,
    convergence_study,
    h1_error,
    manufactured_b,
    manufactured_du,
    manufactured_u,
    solve_poisson_energy,
    solve_poisson_galerkin,
)
from inn.solver.poisson import assemble, reduced_system

P1, P2, P3 = PatchScheme(), PatchScheme(2, 2, 2), PatchScheme(2, 3, 3)


def test_manufactured_values():
    assert manufactured_u(0.0) == 0.0
    assert abs(manufactured_u(10.0)) <= 1e-15
    assert abs(manufactured_u(2.5) - 1.0) <= 1e-8
    assert abs(manufactured_b(2.5) - 2 * math.pi) <= 1e-30 + 1e-15 * 2 * math.pi
    with pytest.raises(DomainError):
        manufactured_u(10.5)


def test_manufactured_consistency():
    # b = -u'' and du matches a central difference of u
    x = np.linspace(0.5, 9.5, 50)
    h = 1e-4
    d2 = (manufactured_u(x + h) - 2 * manufactured_u(x) + manufactured_u(x - h)) / h**2
    np.testing.assert_allclose(-d2, manufactured_b(x), atol=1e-5)
    d1 = (manufactured_u(x + 1e-6) - manufactured_u(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(manufactured_du(x), d1, atol=1e-7)


def test_zero_load_gives_zero():
    zero = PoissonProblem(body_force=lambda x: np.zeros_like(x), exact=None, exact_du=None)
    m = solve_poisson_galerkin(build_uniform_grid(0, 10, 21), P2, zero)
    np.testing.assert_array_equal(m.values, 0.0)


def test_quadratic_solution_is_nodally_exact():
    # u = x (10 - x) solves u'' + 2 = 0 with zero ends and lies in the P=2 trial space
    prob = PoissonProblem(body_force=lambda x: np.full_like(x, 2.0), exact=None, exact_du=None)
    g = build_uniform_grid(0, 10, 11)
    m = solve_poisson_galerkin(g, P2, prob)
    np.testing.assert_allclose(m.values[:, 0], g.nodes * (10 - g.nodes), atol=1e-10)


def test_nonzero_dirichlet_values():
    prob = PoissonProblem(body_force=lambda x: np.zeros_like(x), u_left=1.0, u_right=3.0, exact=None, exact_du=None)
    g = build_uniform_grid(0, 10, 9)
    m = solve_poisson_galerkin(g, P1, prob)
    np.testing.assert_allclose(m.values[:, 0], 1.0 + 0.2 * g.nodes, atol=1e-13)


def test_linear_fem_nodal_superconvergence():
    g = build_uniform_grid(0, 10, 41)
    m = solve_poisson_galerkin(g, P1)
    np.testing.assert_allclose(m.values[:, 0], manufactured_u(g.nodes), atol=1e-6)


@pytest.mark.parametrize("scheme", [P1, P2, P3])
def test_stiffness_spd(scheme):
    g = build_uniform_grid(0, 10, 21)
    K, *_ = reduced_system(g, scheme, PoissonProblem())
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    np.linalg.cholesky(K)
    Kf, _ = assemble(g, scheme, manufactured_b)
    # constants are in the kernel before boundary conditions
    np.testing.assert_allclose(Kf @ np.ones(g.n_nodes), 0.0, atol=1e-12)


def test_quadrature_order_checked():
    with pytest.raises(ValueError):
        assemble(build_uniform_grid(0, 10, 11), P3, manufactured_b, quad_order=3)


def test_two_grid_ratio():
    e41 = h1_error(solve_poisson_galerkin(build_uniform_grid(0, 10, 41), P1))
    e81 = h1_error(solve_poisson_galerkin(build_uniform_grid(0, 10, 81), P1))
    assert 0.5 * e81 * 2 <= e41 <= 2 * e81 * 2


def test_h1_error_examples():
    g = build_uniform_grid(0, 10, 11)
    zero = FullModel(ProductGrid((g,)), P1, 1, [np.zeros((11, 1))])
    assert h1_error(zero) == pytest.approx(1.0, abs=1e-14)
    # a linear exact solution is represented exactly by hats
    lin = FullModel(ProductGrid((g,)), P1, 1, [(3 * g.nodes + 1)[:, None]])
    assert h1_error(lin, lambda x: 3 * x + 1, lambda x: np.full_like(x, 3.0)) <= 1e-12


@pytest.mark.parametrize("scheme,slope,tol", [(P1, -1.0, 0.1), (P2, -2.0, 0.2), (P3, -3.0, 0.3)])
def test_convergence_slopes(scheme, slope, tol, tmp_path):
    rep = convergence_study(scheme)
    assert abs(rep.slope - slope) <= tol
    errs = [r[2] for r in rep.rows]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    text = rep.write_csv(tmp_path / "c.csv").read_text().splitlines()
    assert text[0] == "n_nodes,dof,h1_error" and text[-1].startswith("slope,,")


def test_energy_matches_galerkin():
    g = build_uniform_grid(0, 10, 41)
    direct = solve_poisson_galerkin(g, P1)
    res = solve_poisson_energy(g, P1)
    assert res.converged
    assert np.max(np.abs(res.model.values - direct.values)) <= 1e-6
    e = np.array(res.energies)
    assert np.all(np.diff(e) <= 1e-12 * np.abs(e[:-1]).max())


def test_energy_zero_force_and_adam():
    zero = PoissonProblem(body_force=lambda x: np.zeros_like(x), exact=None, exact_du=None)
    res = solve_poisson_energy(build_uniform_grid(0, 10, 11), P1, problem=zero)
    assert res.converged and np.all(res.model.values == 0)
    g = build_uniform_grid(0, 10, 11)
    res = solve_poisson_energy(g, P1, EnergyConfig(method="adam", lr=0.05, max_iter=20000, gtol=1e-9))
    assert np.max(np.abs(res.model.values - solve_poisson_galerkin(g, P1).values)) <= 1e-6
    with pytest.raises(ValueError):
        solve_poisson_energy(g, P1, EnergyConfig(method="lbfgs"))


def test_grid_must_span_problem():
    with pytest.raises(ValueError):
        solve_poisson_galerkin(build_uniform_grid(0, 5, 11), P1)
