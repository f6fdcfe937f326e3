"""Space-time-parameter heat conduction with a moving Gaussian source (1D).

Solves ``T_t - k T_xx = s(x, t; Pw, eta)`` on ``[0, L] x [0, t_f]`` over a
box of laser powers ``Pw`` and absorptivities ``eta`` with a CP model in
``(x, t, Pw, eta)``.  The initial condition and Dirichlet values are
imposed strongly through frozen factor entries; the remaining entries
minimize a least-squares residual.  The spatial operator is taken in weak
form against the interior spatial shape functions (C0 patches have
derivative jumps at nodes that a pointwise second derivative cannot see),
and the residual is sampled at random ``(t, Pw, eta)`` collocation points.

All four inputs are mapped to unit intervals and temperature is scaled
by ``T_ref`` during the solve::

    xi = x / L,  tau = t / t_f,  p = (Pw - Pw_lo) / (Pw_hi - Pw_lo),  q likewise for eta
    theta = T / T_ref,   theta_tau - D theta_xixi = (t_f / T_ref) s,   D = k t_f / L^2
    T_ref = t_f * s_max * min(1, r_b / (v t_f)),   s_max = 2 Pw_hi eta_hi / (pi r_b^2)

The returned model represents ``T`` itself (``T_ref`` is folded into the
spatial factor) as a function of the normalized inputs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import linalg

from ..grid import PatchScheme, ProductGrid, build_uniform_grid
from ..interp import basis, to_sparse
from ..model import CPModel
from ..optim import AdamState, adam_step
from .poisson import gauss_points

log = logging.getLogger(__name__)


class InfeasibleImpositionError(ValueError):
    pass


@dataclass(frozen=True)
class HeatSTPProblem:
    length: float = 1.0e-3
    t_final: float = 4.0e-3
    diffusivity: float = 5.0e-6
    speed: float = 0.2
    beam_radius: float = 1.0e-4
    power_bounds: tuple[float, float] = (100.0, 200.0)
    absorptivity_bounds: tuple[float, float] = (0.3, 0.6)
    initial_temperature: float | Callable = 0.0
    boundary_temperature: tuple[float, float] = (0.0, 0.0)
    source_scale: float = 1.0

    def __post_init__(self):
        for name in ("length", "t_final", "diffusivity", "beam_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("power_bounds", "absorptivity_bounds"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"{name} must be a nonempty interval, got ({lo}, {hi})")
        if self.speed < 0 or self.speed * self.t_final > self.length * (1 + 1e-12):
            raise ValueError("scan track v * t_f must stay inside [0, L]")

    @property
    def s_max(self) -> float:
        return 2.0 * self.power_bounds[1] * self.absorptivity_bounds[1] / (math.pi * self.beam_radius**2)

    @property
    def t_ref(self) -> float:
        dwell = 1.0 if self.speed == 0 else min(1.0, self.beam_radius / (self.speed * self.t_final))
        return self.t_final * self.s_max * dwell

    @property
    def diffusion_number(self) -> float:
        return self.diffusivity * self.t_final / self.length**2

    def initial(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        T0 = self.initial_temperature
        return np.asarray(T0(x), dtype=float) if callable(T0) else np.full_like(x, float(T0))

    def normalize(self, x, t, Pw, eta) -> np.ndarray:
        """Physical inputs to the unit box used by the solution model."""
        (plo, phi), (elo, ehi) = self.power_bounds, self.absorptivity_bounds
        cols = np.broadcast_arrays(
            np.asarray(x, float) / self.length,
            np.asarray(t, float) / self.t_final,
            (np.asarray(Pw, float) - plo) / (phi - plo),
            (np.asarray(eta, float) - elo) / (ehi - elo),
        )
        return np.stack([np.ravel(c) for c in cols], axis=1)


def heat_source(problem: HeatSTPProblem, x, t, Pw, eta):
    """In-plane Gaussian beam ``2 Pw eta / (pi r_b^2) exp(-2 (x - v t)^2 / r_b^2)``."""
    rb = problem.beam_radius
    x, t = np.asarray(x, float), np.asarray(t, float)
    return problem.source_scale * 2.0 * np.asarray(Pw) * np.asarray(eta) / (math.pi * rb**2) * np.exp(-2.0 * (x - problem.speed * t) ** 2 / rb**2)


# -- finite-difference oracle -----------------------------------------------------


def fd_reference(problem: HeatSTPProblem, Pw: float, eta: float, nx: int, nt: int, boundary: str = "dirichlet"):
    """Explicit Euler / central-difference solution on an ``nt x nx`` space-time grid.

    ``boundary='insulated'`` swaps the Dirichlet ends for reflective ghost
    nodes.  Returns ``(x, t, T)`` with ``T[n, j] = T(x_j, t_n)``.
    """
    if nx < 3 or nt < 2:
        raise ValueError("need nx >= 3 and nt >= 2")
    x = np.linspace(0.0, problem.length, nx)
    t = np.linspace(0.0, problem.t_final, nt)
    dx, dt = x[1] - x[0], t[1] - t[0]
    k = problem.diffusivity
    cfl = k * dt / dx**2
    if cfl > 0.5:
        raise ValueError(f"CFL violated: k dt / dx^2 = {cfl:.4g} > 0.5 (increase nt)")
    T = problem.initial(x).copy()
    if boundary == "dirichlet":
        T[0], T[-1] = problem.boundary_temperature
    elif boundary != "insulated":
        raise ValueError(f"unknown boundary {boundary!r}")
    out = np.empty((nt, nx))
    out[0] = T
    for n in range(nt - 1):
        lap = np.empty_like(T)
        lap[1:-1] = T[2:] - 2.0 * T[1:-1] + T[:-2]
        lap[0] = 2.0 * (T[1] - T[0])
        lap[-1] = 2.0 * (T[-2] - T[-1])
        T = T + cfl * lap + dt * heat_source(problem, x, t[n], Pw, eta)
        if boundary == "dirichlet":
            T[0], T[-1] = problem.boundary_temperature
        out[n + 1] = T
    return x, t, out


def fd_steps_for(problem: HeatSTPProblem, nx: int, cfl: float = 0.4) -> int:
    """Smallest time-level count keeping ``k dt / dx^2 <= cfl``."""
    dx = problem.length / (nx - 1)
    dt = cfl * dx**2 / problem.diffusivity
    return int(math.ceil(problem.t_final / dt)) + 1


def r2_score(reference, predicted) -> float:
    reference, predicted = np.ravel(reference), np.ravel(predicted)
    ss_tot = np.sum((reference - reference.mean()) ** 2)
    if ss_tot == 0:
        raise ZeroDivisionError("reference has zero variance")
    return float(1.0 - np.sum((reference - predicted) ** 2) / ss_tot)


# -- CP solver --------------------------------------------------------------------


@dataclass
class HeatSolveConfig:
    n_x: int = 64
    n_t: int = 64
    n_power: int = 8
    n_absorptivity: int = 8
    modes: int = 16
    scheme: PatchScheme = PatchScheme(2, 2, 2)
    param_scheme: PatchScheme | None = None
    n_colloc: int = 1000
    epochs: int = 3000
    lr: float = 1e-2
    lr_final: float = 1e-4
    seed: int = 0
    init_scale: float = 0.1
    record_every: int = 10

    def __post_init__(self):
        if self.scheme.order < 2:
            raise ValueError("the spatial scheme needs poly_order >= 2 for second derivatives")
        if self.modes < 1 or self.n_colloc < 1 or self.epochs < 1:
            raise ValueError("modes, n_colloc and epochs must be positive")


@dataclass
class HeatSTPSolution:
    problem: HeatSTPProblem
    model: CPModel
    history: list[tuple[int, float]] = field(default_factory=list)

    def temperature(self, x, t, Pw, eta) -> np.ndarray:
        return self.model.evaluate(self.problem.normalize(x, t, Pw, eta))[:, 0]

    def field_on(self, x, t, Pw, eta) -> np.ndarray:
        """``T`` on the space-time grid ``x`` by ``t`` at fixed parameters, shape ``(len(t), len(x))``."""
        X, Tt = np.meshgrid(x, t)
        return self.temperature(X.ravel(), Tt.ravel(), Pw, eta).reshape(len(t), len(x))

    @property
    def initial_loss(self) -> float:
        return self.history[0][1]

    @property
    def final_loss(self) -> float:
        return self.history[-1][1]


def _masks(cfg: HeatSolveConfig, lift: bool):
    M = cfg.modes
    shapes = [(M, cfg.n_x, 1), (M, cfg.n_t, 1), (M, cfg.n_power, 1), (M, cfg.n_absorptivity, 1)]
    masks = [np.ones(s) for s in shapes]
    h = 1 if lift else 0
    masks[0][h:, 0, :] = 0.0
    masks[0][h:, -1, :] = 0.0
    masks[1][h:, 0, :] = 0.0
    if lift:
        for m in masks:
            m[0] = 0.0
    return masks


class _WeakResidual:
    """Spatially weak residual of the scaled equation and its parameter gradient.

    For each sampled ``(tau, p, q)`` the residual is tested against the
    interior spatial shape functions and measured in the modal norm
    ``sum_k rho_k^2 / (1 + D lambda_k)``, where ``(lambda_k, phi_k)`` solve
    ``K phi = lambda M phi`` on interior nodes.  The weighting tames the
    stiff high-frequency spatial modes (an H^-1-type norm in space).
    """

    def __init__(self, problem: HeatSTPProblem, model: CPModel, n_quad: int = 6):
        self.problem = problem
        self.model = model
        self.D = problem.diffusion_number
        self.src = problem.t_final / problem.t_ref
        gx, sx = model.pgrid[0], model.schemes[0]
        xq, wq = gauss_points(gx, n_quad)
        _, idx, (N, dN) = basis(gx, sx, xq, max_deriv=1)
        J = gx.n_nodes
        mass, stiff = np.zeros((J, J)), np.zeros((J, J))
        pairs = (idx[:, :, None], idx[:, None, :])
        np.add.at(mass, pairs, wq[:, None, None] * N[:, :, None] * N[:, None, :])
        np.add.at(stiff, pairs, wq[:, None, None] * dN[:, :, None] * dN[:, None, :])
        inner = np.arange(1, J - 1)
        lam, phi = linalg.eigh(stiff[np.ix_(inner, inner)], mass[np.ix_(inner, inner)])
        w = np.sqrt(1.0 / (1.0 + self.D * lam))[:, None]
        self.B = w * (phi.T @ mass[inner, :])
        self.A = w * (phi.T @ stiff[inner, :])
        load = to_sparse(idx, N * wq[:, None], J).T.toarray()[inner]
        self.P = w * (phi.T @ load)
        self.xq = xq

    def forcing(self, Z):
        """Projected scaled source, ``(n, J_inner)``."""
        p = self.problem
        (plo, phi), (elo, ehi) = p.power_bounds, p.absorptivity_bounds
        Pw = plo + Z[:, 1] * (phi - plo)
        eta = elo + Z[:, 2] * (ehi - elo)
        tt = Z[:, 0] * p.t_final
        G = np.exp(-2.0 * (self.xq[:, None] * p.length - p.speed * tt[None, :]) ** 2 / p.beam_radius**2)
        amp = p.source_scale * self.src * 2.0 * Pw * eta / (math.pi * p.beam_radius**2)
        return (self.P @ G).T * amp[:, None]

    def loss_and_grad(self, Z, need_grad: bool = True):
        """``Z`` holds ``(tau, p, q)`` samples in the unit cube."""
        m = self.model
        full = np.column_stack([np.zeros(len(Z)), Z])
        _, (it, wt), (ip, wp), (ie, we) = m.bases(full, [0, 1, 0, 0])
        X = m.factors[0][:, :, 0]
        Ft, Fp, Fe = (F[:, :, 0] for F in m.factors[1:])

        def modes(F, idx, w):
            return np.einsum("nk,mnk->nm", w, F[:, idx])

        t0, t1 = modes(Ft, it, wt[0]), modes(Ft, it, wt[1])
        p0, e0 = modes(Fp, ip, wp[0]), modes(Fe, ie, we[0])
        pe = p0 * e0
        BX, AX = X @ self.B.T, X @ self.A.T
        r = (t1 * pe) @ BX + self.D * (t0 * pe) @ AX - self.forcing(Z)
        loss = float(np.mean(r * r))
        if not need_grad:
            return loss, None
        R = 2.0 * r / r.size
        gx = (t1 * pe).T @ R @ self.B + self.D * (t0 * pe).T @ R @ self.A
        RB, RA = R @ BX.T, R @ AX.T

        def scatter(idx, w, G, J):
            return np.asarray(to_sparse(idx, w, J).T @ G).T[:, :, None]

        gt = scatter(it, wt[1], RB * pe, Ft.shape[1]) + scatter(it, wt[0], self.D * RA * pe, Ft.shape[1])
        op = RB * t1 + self.D * RA * t0
        gp = scatter(ip, wp[0], op * e0, Fp.shape[1])
        ge = scatter(ie, we[0], op * p0, Fe.shape[1])
        return loss, [gx[:, :, None], gt, gp, ge]


def build_heat_model(problem: HeatSTPProblem, cfg: HeatSolveConfig) -> tuple[CPModel, list[np.ndarray], bool]:
    """Seeded CP model in scaled units with IC/BC entries already imposed."""
    grids = [build_uniform_grid(0.0, 1.0, n) for n in (cfg.n_x, cfg.n_t, cfg.n_power, cfg.n_absorptivity)]
    pgrid = ProductGrid(tuple(grids))
    ps = cfg.param_scheme or cfg.scheme
    schemes = (cfg.scheme, cfg.scheme, ps, ps)
    xs = grids[0].nodes * problem.length
    T0 = problem.initial(xs)
    left, right = problem.boundary_temperature
    if not (np.isclose(T0[0], left) and np.isclose(T0[-1], right)):
        raise InfeasibleImpositionError(
            f"initial temperature at the ends ({T0[0]}, {T0[-1]}) disagrees with Dirichlet values ({left}, {right})"
        )
    lift = bool(np.any(T0 != 0.0))
    if lift and cfg.modes < 2:
        raise InfeasibleImpositionError("a nonzero initial condition needs one frozen lift mode plus at least one free mode (modes >= 2)")
    rng = np.random.default_rng(cfg.seed)
    M = cfg.modes
    b = cfg.init_scale / M ** 0.25
    params = [rng.uniform(-b, b, size=(M, g.n_nodes, 1)) for g in grids]
    masks = _masks(cfg, lift)
    params = [p * mk for p, mk in zip(params, masks)]
    if lift:
        params[0][0, :, 0] = T0 / problem.t_ref
        for p in params[1:]:
            p[0] = 1.0
    return CPModel(pgrid, schemes, 1, params), masks, lift


def solve_heat_stp(problem: HeatSTPProblem, cfg: HeatSolveConfig | None = None, callback=None) -> HeatSTPSolution:
    """Minimize the sampled residual with ADAM; returns the CP surrogate of ``T``.

    Fresh ``(t, Pw, eta)`` collocation points are drawn uniformly every
    epoch.  The learning rate decays geometrically from ``lr`` to
    ``lr_final``.  History rows are ``(epoch, loss)`` with epoch 0 the
    initial state.
    """
    cfg = cfg or HeatSolveConfig()
    model, masks, lift = build_heat_model(problem, cfg)
    history = []
    if problem.source_scale == 0 and not lift:
        # homogeneous data: the zero field solves the problem exactly
        model.params = [np.zeros_like(p) for p in model.params]
        history.append((0, 0.0))
    else:
        res = _WeakResidual(problem, model)
        rng = np.random.default_rng(cfg.seed + 1)
        state = AdamState.for_params(model.params, lr=cfg.lr)
        decay = (cfg.lr_final / cfg.lr) ** (1.0 / max(cfg.epochs - 1, 1))
        for epoch in range(cfg.epochs + 1):
            Z = rng.uniform(size=(cfg.n_colloc, 3))
            loss, grads = res.loss_and_grad(Z, need_grad=epoch < cfg.epochs)
            if not np.isfinite(loss):
                raise FloatingPointError(f"heat solve diverged at epoch {epoch}")
            if epoch % cfg.record_every == 0 or epoch == cfg.epochs:
                history.append((epoch, loss))
                if callback is not None:
                    callback(epoch, loss)
            if epoch == cfg.epochs:
                break
            grads = [g * mk for g, mk in zip(grads, masks)]
            model.params, state = adam_step(state, model.params, grads, lr=cfg.lr * decay**epoch)
    params = [p.copy() for p in model.params]
    params[0] *= problem.t_ref
    if lift:
        params[0][0, :, 0] = problem.initial(model.pgrid[0].nodes * problem.length)
    out = CPModel(model.pgrid, model.schemes, 1, params)
    out.meta = {
        "problem": "heat_stp",
        "inputs": ["x/length", "t/t_final", "power (unit box)", "absorptivity (unit box)"],
    }
    return HeatSTPSolution(problem, out, history)


def write_slice_csv(x, t, T, path) -> Path:
    """Write a space-time slice as ``t,x,T`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "T"])
        for n, tn in enumerate(t):
            for j, xj in enumerate(x):
                w.writerow([format(float(tn), ".17g"), format(float(xj), ".17g"), format(float(T[n, j]), ".17g")])
    return path


@dataclass
class CornerComparison:
    power: float
    absorptivity: float
    r2: float
    x: np.ndarray
    t: np.ndarray
    reference: np.ndarray
    predicted: np.ndarray


def compare_corners(solution: HeatSTPSolution, fd_nx: int = 129, stride: int = 4) -> list[CornerComparison]:
    """R^2 of the surrogate against the FD oracle at the four (Pw, eta) box corners.

    Every ``stride``-th FD time level is compared.
    """
    p = solution.problem
    nt = fd_steps_for(p, fd_nx)
    out = []
    for Pw in p.power_bounds:
        for eta in p.absorptivity_bounds:
            x, t, T = fd_reference(p, Pw, eta, fd_nx, nt)
            t, T = t[::stride], T[::stride]
            pred = solution.field_on(x, t, Pw, eta)
            out.append(CornerComparison(float(Pw), float(eta), r2_score(T, pred), x, t, T, pred))
    return out


def imposition_errors(solution: HeatSTPSolution) -> tuple[float, float]:
    """Max deviation from the IC (first time node) and from the BC (spatial end nodes) over all grid nodes."""
    m, p = solution.model, solution.problem
    xs, ts, ps, es = (m.pgrid[i].nodes for i in range(4))
    Z = np.array([(x, 0.0, a, b) for x in xs for a in ps for b in es])
    ic = np.max(np.abs(m.evaluate(Z)[:, 0] - p.initial(Z[:, 0] * p.length)))
    bc = 0.0
    for end, value in zip((xs[0], xs[-1]), p.boundary_temperature):
        Z = np.array([(end, t, a, b) for t in ts for a in ps for b in es])
        bc = max(bc, float(np.max(np.abs(m.evaluate(Z)[:, 0] - value))))
    return float(ic), bc
