"""Inverse problems: recover model inputs from observed outputs.

The objective for a candidate input ``x`` is the mean over observations
and output components of ``(u(x) - u*_k)^2``.  Descents run for all
starts at once (each start is one row of a batch).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import INNModel
from .optim import AdamState, adam_step, project
from .trainer import from_model_inputs, lhs_design


@dataclass
class CalibrationProblem:
    """Observations plus which model inputs are free.

    ``fixed`` gives values (model coordinates) for every input; entries at
    free indices are ignored.  ``bounds`` defaults to the model domain of
    the free inputs.  ``guesses`` (rows of free-input values) are descended
    from in addition to the Latin-hypercube starts.
    """

    model: INNModel
    observations: np.ndarray
    free: Sequence[int] | None = None
    fixed: np.ndarray | None = None
    bounds: np.ndarray | None = None
    starts: int = 50
    seed: int = 0
    guesses: np.ndarray | None = None

    def __post_init__(self):
        I = self.model.n_inputs
        self.observations = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if self.observations.shape[1] != self.model.n_outputs:
            self.observations = self.observations.reshape(-1, self.model.n_outputs)
        if self.observations.size == 0 or not np.all(np.isfinite(self.observations)):
            raise ValueError("observations must be nonempty and finite")
        self.free = list(range(I)) if self.free is None else [int(i) for i in self.free]
        if not self.free:
            raise ValueError("at least one free input is required")
        for i in self.free:
            if not 0 <= i < I:
                raise IndexError(f"free index {i} out of range for a {I}-input model")
        if len(set(self.free)) != len(self.free):
            raise ValueError("duplicate free indices")
        dom = self.model.pgrid.bounds
        if self.fixed is None:
            self.fixed = dom.mean(axis=1)
        self.fixed = np.asarray(self.fixed, dtype=float).reshape(I)
        if self.bounds is None:
            self.bounds = dom[self.free]
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(len(self.free), 2)
        if np.any(self.bounds[:, 0] < dom[self.free, 0]) or np.any(self.bounds[:, 1] > dom[self.free, 1]):
            raise ValueError("calibration bounds exceed the model domain")
        if self.starts < 1:
            raise ValueError("need at least one start")
        if self.guesses is not None:
            self.guesses = np.asarray(self.guesses, dtype=float).reshape(-1, len(self.free))

    def full_points(self, z: np.ndarray) -> np.ndarray:
        X = np.tile(self.fixed, (len(z), 1))
        X[:, self.free] = z
        return X

    def objective(self, z, with_grad: bool = False):
        """Objective (and gradient w.r.t. the free inputs) for each row of ``z``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        X = self.full_points(z)
        diff = self.model.evaluate(X)[:, None, :] - self.observations[None, :, :]
        obj = np.mean(diff**2, axis=(1, 2))
        if not with_grad:
            return obj
        K, L = self.observations.shape
        jac = self.model.jacobian_batch(X)[:, :, self.free]
        g = (2.0 / (K * L)) * np.einsum("nkl,nli->ni", diff, jac)
        return obj, g


@dataclass
class CalibrationConfig:
    iterations: int = 1000
    lr: float = 2e-2
    lr_final: float = 1e-7


@dataclass
class CalibrationResult:
    x_star: np.ndarray
    objective: float
    starts: list[tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)
    x_star_raw: np.ndarray | None = None

    def write_csv(self, path) -> Path:
        path = Path(path)
        f = lambda v: format(float(v), ".17g")
        n = len(self.starts[0][0]) if self.starts else 0
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["start"] + [f"z0_{i + 1}" for i in range(n)] + [f"z_{i + 1}" for i in range(n)] + ["objective"])
            for s, (z0, z, obj) in enumerate(self.starts):
                w.writerow([s] + [f(v) for v in z0] + [f(v) for v in z] + [f(obj)])
            w.writerow(["best"] + [""] * n + [f(v) for v in self.x_star] + [f(self.objective)])
        return path


def descend(problem: CalibrationProblem, z0: np.ndarray, config: CalibrationConfig):
    """Projected ADAM from every row of ``z0``; returns the best iterate per row and its objective."""
    lo_hi = (problem.bounds[:, 0], problem.bounds[:, 1])
    z = project(z0, lo_hi)
    best_z = z.copy()
    best_f = problem.objective(z)
    state = AdamState.for_params([z], lr=config.lr)
    n = max(config.iterations, 1)
    decay = (config.lr_final / config.lr) ** (1.0 / n)
    for it in range(config.iterations):
        f, g = problem.objective(z, with_grad=True)
        ok = np.isfinite(f) & np.all(np.isfinite(g), axis=1)
        better = ok & (f < best_f)
        best_z[better], best_f[better] = z[better], f[better]
        g = np.where(ok[:, None], g, 0.0)
        (z,), state = adam_step(state, [z], [g], lr=config.lr * decay**it)
        z = project(z, lo_hi)
    f = problem.objective(z)
    better = np.isfinite(f) & (f < best_f)
    best_z[better], best_f[better] = z[better], f[better]
    return best_z, best_f


def calibrate(problem: CalibrationProblem, config: CalibrationConfig | None = None) -> CalibrationResult:
    """Multi-start bounded minimization from a seeded Latin-hypercube set of starts.

    Each start reports its best visited point, so its objective never
    exceeds the objective at its starting point.  Ties between starts go
    to the lower start index.
    """
    config = config or CalibrationConfig()
    z0 = lhs_design(problem.starts, problem.bounds, problem.seed)
    if problem.guesses is not None:
        z0 = np.vstack([z0, project(problem.guesses, (problem.bounds[:, 0], problem.bounds[:, 1]))])
    z, f = descend(problem, z0, config)
    if not np.any(np.isfinite(f)):
        raise FloatingPointError("all calibration starts diverged")
    k = int(np.nanargmin(np.where(np.isfinite(f), f, np.inf)))
    x_star = problem.full_points(z[k : k + 1])[0]
    raw = from_model_inputs(problem.model, x_star)[0] if "input_bounds" in problem.model.meta else None
    starts = [(z0[i], z[i], float(f[i])) for i in range(len(z0))]
    return CalibrationResult(x_star, float(f[k]), starts, raw)


@dataclass
class Basin:
    point: np.ndarray
    objective: float
    members: int


@dataclass
class IdentifiabilityReport:
    basins: list[Basin]
    probe_min: float
    probe_points: int


def identifiability_report(
    problem: CalibrationProblem,
    density: int = 41,
    config: CalibrationConfig | None = None,
    atol: float = 1e-10,
    merge_tol: float | None = None,
    max_candidates: int = 64,
) -> IdentifiabilityReport:
    """Scan the objective, refine its local minima and group near-optimal end points.

    Up to 3 free inputs are probed on a ``density``-per-axis lattice and
    lattice local minima are refined; beyond that ``density**3`` Latin
    hypercube probes are drawn and the best ``max_candidates`` refined.
    Refined points within ``2 * best + atol`` of the best objective are
    merged into basins when closer than ``merge_tol`` (in units of the
    normalized box; default two lattice spacings) and returned best first.
    """
    config = config or CalibrationConfig(iterations=1500)
    F = len(problem.free)
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    if F <= 3:
        axes = [np.linspace(a, b, density) for a, b in zip(lo, hi)]
        Z = np.array(list(product(*axes)))
        vals = problem.objective(Z).reshape((density,) * F)
        cand = _lattice_minima(vals)
        cand = cand[np.argsort(vals.ravel()[cand], kind="stable")][:max_candidates]
        Zc = Z[cand]
        probe_min = float(vals.min())
    else:
        Z = lhs_design(density**3, problem.bounds, problem.seed)
        vals = problem.objective(Z)
        Zc = Z[np.argsort(vals, kind="stable")[:max_candidates]]
        probe_min = float(vals.min())
    zr, fr = descend(problem, Zc, config)
    best = float(np.min(fr))
    keep = np.flatnonzero(fr <= 2.0 * best + atol)
    keep = keep[np.argsort(fr[keep], kind="stable")]
    tol = 2.0 / (density - 1) if merge_tol is None else merge_tol
    scale = hi - lo
    basins: list[Basin] = []
    for i in keep:
        for b in basins:
            if np.max(np.abs((zr[i] - b.point[problem.free]) / scale)) <= tol:
                b.members += 1
                break
        else:
            basins.append(Basin(problem.full_points(zr[i : i + 1])[0], float(fr[i]), 1))
    return IdentifiabilityReport(basins, probe_min, len(Z))


def _lattice_minima(vals: np.ndarray) -> np.ndarray:
    """Flat indices of lattice points no larger than any neighbour (including diagonals)."""
    padded = np.pad(vals, 1, constant_values=np.inf)
    is_min = np.ones(vals.shape, dtype=bool)
    core = tuple(slice(1, -1) for _ in vals.shape)
    for shift in product((-1, 0, 1), repeat=vals.ndim):
        if not any(shift):
            continue
        sl = tuple(slice(1 + s, padded.shape[d] - 1 + s) for d, s in enumerate(shift))
        is_min &= padded[core] <= padded[sl]
    return np.flatnonzero(is_min)
