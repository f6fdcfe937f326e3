"""1D Poisson problem with a manufactured two-Gaussian solution on [0, 10].

Galerkin assembly over patch shape functions, strong Dirichlet
elimination, banded Cholesky solve, and H1 convergence studies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from ..grid import DomainError, Grid1D, PatchScheme, ProductGrid, build_uniform_grid
from ..interp import basis
from ..model import FullModel
from ..optim import AdamState, adam_step

LO, HI = 0.0, 10.0
_PI = math.pi
_E1 = math.exp(-6.25 * _PI)
_E2 = math.exp(-56.25 * _PI)


class SingularSystemError(np.linalg.LinAlgError):
    pass


def _in_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= LO) & (x <= HI))):
        raise DomainError(f"manufactured problem is defined on [{LO}, {HI}]")
    return x


def manufactured_u(x):
    x = _in_domain(x)
    return (
        (np.exp(-_PI * (x - 2.5) ** 2) - _E1)
        + 2.0 * (np.exp(-_PI * (x - 7.5) ** 2) - _E2)
        - (_E1 - _E2) / 10.0 * x
    )


def manufactured_du(x):
    x = _in_domain(x)
    return (
        -2.0 * _PI * (x - 2.5) * np.exp(-_PI * (x - 2.5) ** 2)
        - 4.0 * _PI * (x - 7.5) * np.exp(-_PI * (x - 7.5) ** 2)
        - (_E1 - _E2) / 10.0
    )


def manufactured_b(x):
    x = _in_domain(x)
    a, b = (x - 2.5) ** 2, (x - 7.5) ** 2
    return -(4 * _PI**2 * a - 2 * _PI) / np.exp(_PI * a) - (8 * _PI**2 * b - 4 * _PI) / np.exp(_PI * b)


@dataclass(frozen=True)
class PoissonProblem:
    """``u'' + b = 0`` on ``[lo, hi]`` with Dirichlet end values."""

    body_force: Callable = manufactured_b
    u_left: float = 0.0
    u_right: float = 0.0
    lo: float = LO
    hi: float = HI
    exact: Callable | None = manufactured_u
    exact_du: Callable | None = manufactured_du


def gauss_points(grid: Grid1D, n_quad: int):
    """Gauss-Legendre points and weights on every segment, flattened."""
    t, w = np.polynomial.legendre.leggauss(n_quad)
    a, b = grid.nodes[:-1, None], grid.nodes[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    return x.ravel(), wx.ravel()


def _default_quad(scheme: PatchScheme) -> int:
    return max(scheme.order + 1, 8)


def assemble(grid: Grid1D, scheme: PatchScheme, body_force: Callable, quad_order: int | None = None):
    """Dense stiffness matrix and load vector (before boundary conditions)."""
    nq = _default_quad(scheme) if quad_order is None else int(quad_order)
    if nq < scheme.order + 1:
        raise ValueError(f"quadrature order {nq} below required {scheme.order + 1}")
    x, w = gauss_points(grid, nq)
    _, idx, (N, dN) = basis(grid, scheme, x, max_deriv=1)
    n = grid.n_nodes
    K = np.zeros((n, n))
    np.add.at(K, (idx[:, :, None], idx[:, None, :]), w[:, None, None] * dN[:, :, None] * dN[:, None, :])
    f = np.zeros(n)
    np.add.at(f, idx, (w * np.asarray(body_force(x), dtype=float))[:, None] * N)
    return K, f


def reduced_system(grid, scheme, problem: PoissonProblem, quad_order=None):
    """Stiffness/load restricted to interior nodes after strong Dirichlet elimination."""
    K, f = assemble(grid, scheme, problem.body_force, quad_order)
    n = grid.n_nodes
    ub = np.zeros(n)
    ub[0], ub[-1] = problem.u_left, problem.u_right
    free = np.arange(1, n - 1)
    rhs = f[free] - K[np.ix_(free, [0, n - 1])] @ ub[[0, n - 1]]
    return K[np.ix_(free, free)], rhs, free, ub


def _to_upper_band(A: np.ndarray):
    n = A.shape[0]
    i, j = np.nonzero(A)
    p = int(np.max(np.abs(i - j))) if i.size else 0
    ab = np.zeros((p + 1, n))
    for d in range(p + 1):
        ab[p - d, d:] = np.diagonal(A, d)
    return ab


def _model_from_nodal(grid, scheme, u) -> FullModel:
    return FullModel(ProductGrid((grid,)), scheme, 1, [np.asarray(u, dtype=float).reshape(-1, 1)])


def _check_grid(grid: Grid1D, problem: PoissonProblem):
    if not (np.isclose(grid.lo, problem.lo) and np.isclose(grid.hi, problem.hi)):
        raise ValueError(f"grid must span [{problem.lo}, {problem.hi}]")


def solve_poisson_galerkin(
    grid: Grid1D,
    scheme: PatchScheme,
    problem: PoissonProblem | None = None,
    quad_order: int | None = None,
) -> FullModel:
    problem = problem or PoissonProblem()
    _check_grid(grid, problem)
    Kff, rhs, free, ub = reduced_system(grid, scheme, problem, quad_order)
    u = ub.copy()
    if free.size:
        try:
            u[free] = linalg.solveh_banded(_to_upper_band(Kff), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"stiffness matrix not positive definite: {exc}") from None
    return _model_from_nodal(grid, scheme, u)


@dataclass
class EnergyConfig:
    """Optimizer settings for energy minimization.

    ``method='gd'`` uses plain gradient descent with step ``lr`` (default:
    the reciprocal of a Gershgorin bound on the largest eigenvalue).
    ``method='adam'`` uses ADAM with an exponentially decaying rate.
    """

    method: str = "gd"
    lr: float | None = None
    max_iter: int = 500_000
    gtol: float = 1e-11
    lr_decay: float = 1.0
    record_every: int = 1


@dataclass
class EnergyResult:
    model: FullModel
    energies: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def solve_poisson_energy(
    grid: Grid1D,
    scheme: PatchScheme,
    config: EnergyConfig | None = None,
    problem: PoissonProblem | None = None,
    quad_order: int | None = None,
) -> EnergyResult:
    """Minimize ``0.5 u^T K u - u^T f`` over interior nodal values by iteration.

    Stops once ``||K u - f||_2 <= gtol * max(||f||_2, 1)``.
    """
    config = config or EnergyConfig()
    problem = problem or PoissonProblem()
    _check_grid(grid, problem)
    K, f, free, ub = reduced_system(grid, scheme, problem, quad_order)
    u = np.zeros(free.size)
    tol = config.gtol * max(np.linalg.norm(f), 1.0)
    energies = []
    if config.method == "gd":
        lr = config.lr if config.lr is not None else 1.0 / np.max(np.sum(np.abs(K), axis=1))
        state = None
    elif config.method == "adam":
        lr = config.lr if config.lr is not None else 1e-3
        state = AdamState.for_params([u], lr=lr)
    else:
        raise ValueError(f"unknown method {config.method!r}")
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        Ku = K @ u
        g = Ku - f
        if it % config.record_every == 1 or config.record_every == 1:
            energies.append(float(0.5 * u @ Ku - u @ f))
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"energy minimization diverged at iteration {it}")
        if np.linalg.norm(g) <= tol:
            converged = True
            break
        if state is None:
            u = u - lr * g
        else:
            (u,), state = adam_step(state, [u], [g], lr=lr * config.lr_decay ** it)
    full = ub.copy()
    full[free] = u
    return EnergyResult(_model_from_nodal(grid, scheme, full), energies, it, converged)


def h1_error(model: FullModel, exact: Callable = manufactured_u, exact_du: Callable = manufactured_du, quad_order: int = 10) -> float:
    """Relative H1 error of a 1D model against an exact solution."""
    grid = model.pgrid[0]
    x, w = gauss_points(grid, quad_order)
    uh = model.evaluate(x[:, None])[:, 0]
    duh = model.jacobian_batch(x[:, None])[:, 0, 0]
    u, du = np.asarray(exact(x)), np.asarray(exact_du(x))
    num = np.sum(w * ((u - uh) ** 2 + (du - duh) ** 2))
    den = np.sum(w * (u**2 + du**2))
    if den <= 0:
        raise ZeroDivisionError("exact solution has zero H1 norm")
    return float(np.sqrt(num / den))


@dataclass
class ConvergenceReport:
    scheme: PatchScheme
    rows: list[tuple[int, int, float]]
    slope: float

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_nodes", "dof", "h1_error"])
            for n, dof, e in self.rows:
                w.writerow([n, dof, format(e, ".17g")])
            w.writerow(["slope", "", format(self.slope, ".17g")])
        return path


def fit_slope(dofs, errors) -> float:
    return float(np.polyfit(np.log(np.asarray(dofs, float)), np.log(np.asarray(errors, float)), 1)[0])


def convergence_study(
    scheme: PatchScheme,
    node_counts: Sequence[int] = (41, 81, 161, 321),
    problem: PoissonProblem | None = None,
    quad_order: int | None = None,
    error_quad_order: int = 10,
) -> ConvergenceReport:
    """H1 error of Galerkin solutions over a mesh sweep; slope of log(error) vs log(dof).

    The degree-of-freedom count of a run is its number of nodes.
    """
    if len(node_counts) < 3:
        raise ValueError("need at least 3 node counts")
    problem = problem or PoissonProblem()
    if problem.exact is None or problem.exact_du is None:
        raise ValueError("convergence study needs the exact solution")
    rows = []
    for n in node_counts:
        grid = build_uniform_grid(problem.lo, problem.hi, n)
        model = solve_poisson_galerkin(grid, scheme, problem, quad_order)
        rows.append((int(n), int(n), h1_error(model, problem.exact, problem.exact_du, error_quad_order)))
    return ConvergenceReport(scheme, rows, fit_slope([r[1] for r in rows], [r[2] for r in rows]))
