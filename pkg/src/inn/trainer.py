"""Datasets, sampling and the MSE training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .model import INNModel
from .optim import AdamState, adam_step
from .synthetic import get_function

log = logging.getLogger(__name__)


class DataFormatError(ValueError):
    pass


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    bounds: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        K = self.inputs.shape[0]
        if K < 1 or self.inputs.shape[1] < 1 or self.targets.shape[1] < 1:
            raise DataFormatError("dataset needs K >= 1 rows, I >= 1 inputs and L >= 1 outputs")
        if self.targets.shape[0] != K:
            raise DataFormatError(f"{K} input rows but {self.targets.shape[0]} target rows")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise DataFormatError("dataset contains non-finite entries")
        if self.bounds is None:
            self.bounds = np.stack([self.inputs.min(axis=0), self.inputs.max(axis=0)], axis=1)
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(self.n_inputs, 2)
        if np.any(self.inputs < self.bounds[:, 0]) or np.any(self.inputs > self.bounds[:, 1]):
            raise DataFormatError("bounds do not contain all inputs")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], self.bounds)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    stop_mse: float | None = None
    seed: int = 0
    train_fraction: float = 0.8
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class TrainResult:
    model: INNModel
    history: list[tuple[int, float, float]]
    converged_epoch: int | None
    train_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def final_train_mse(self) -> float:
        return self.history[-1][1]


# -- csv io ------------------------------------------------------------------


def load_csv(path) -> Dataset:
    """Read ``x1..xI,u1..uL`` columns; errors name the offending line."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    xs = [h for h in header if h.startswith("x")]
    us = [h for h in header if h.startswith("u")]
    if header != xs + us or xs != [f"x{i + 1}" for i in range(len(xs))] or us != [f"u{i + 1}" for i in range(len(us))]:
        raise DataFormatError(f"{path}:1: header must be x1..xI followed by u1..uL, got {header}")
    if not xs or not us:
        raise DataFormatError(f"{path}:1: need at least one input and one output column")
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) == 0 or all(not c.strip() for c in row):
            raise DataFormatError(f"{path}:{lineno}: blank line")
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            body.append([float(c) for c in row])
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: non-numeric cell") from None
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    data = np.array(body)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0]) + 2
        raise DataFormatError(f"{path}:{bad}: non-finite value")
    return Dataset(data[:, : len(xs)], data[:, len(xs) :])


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(dataset: Dataset, path) -> Path:
    path = Path(path)
    header = [f"x{i + 1}" for i in range(dataset.n_inputs)] + [f"u{i + 1}" for i in range(dataset.n_outputs)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, u in zip(dataset.inputs, dataset.targets):
            w.writerow([fmt(v) for v in x] + [fmt(v) for v in u])
    return path


# -- sampling ----------------------------------------------------------------


def lhs_design(n: int, bounds, seed: int) -> np.ndarray:
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if n < 1:
        raise ValueError("need n >= 1 samples")
    sampler = qmc.LatinHypercube(d=len(bounds), seed=np.random.default_rng(seed))
    return qmc.scale(sampler.random(n), bounds[:, 0], bounds[:, 1])


def lhs_sample(fn: str, n: int, bounds=None, seed: int = 0, n_inputs: int | None = None) -> Dataset:
    """Latin-hypercube design evaluated through a named synthetic function."""
    f = get_function(fn)
    if bounds is None:
        I = f.n_inputs or n_inputs
        if I is None:
            raise ValueError(f"{fn} needs explicit bounds or n_inputs")
        bounds = [f.default_bounds] * I
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    X = lhs_design(n, bounds, seed)
    return Dataset(X, f(X), bounds)


# -- normalization -------------------------------------------------------------


def attach_normalization(model: INNModel, bounds) -> None:
    """Record the raw input box that maps affinely onto the model's grid domain."""
    bounds = np.asarray(bounds, dtype=float).reshape(model.n_inputs, 2).copy()
    flat = bounds[:, 1] <= bounds[:, 0]
    bounds[flat, 0] -= 0.5
    bounds[flat, 1] += 0.5
    model.meta["input_bounds"] = bounds.tolist()


def to_model_inputs(model: INNModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    raw = model.meta.get("input_bounds")
    if raw is None:
        return X
    raw = np.asarray(raw)
    dom = model.pgrid.bounds
    u = (X - raw[:, 0]) / (raw[:, 1] - raw[:, 0])
    out = dom[:, 0] + u * (dom[:, 1] - dom[:, 0])
    # rounding can push exact bound values a hair outside the grid
    inside = (X >= raw[:, 0]) & (X <= raw[:, 1])
    return np.where(inside, np.clip(out, dom[:, 0], dom[:, 1]), out)


def from_model_inputs(model: INNModel, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    raw = model.meta.get("input_bounds")
    if raw is None:
        return Z
    raw = np.asarray(raw)
    dom = model.pgrid.bounds
    u = (Z - dom[:, 0]) / (dom[:, 1] - dom[:, 0])
    return raw[:, 0] + u * (raw[:, 1] - raw[:, 0])


# -- loss, training, metrics ----------------------------------------------------


def mse_loss(model: INNModel, X, Y, normalized: bool = True):
    """Mean squared error over points and outputs, with its parameter gradient.

    ``X`` is in model coordinates unless ``normalized=False``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not normalized:
        X = to_model_inputs(model, X)
    Y = np.asarray(Y, dtype=float).reshape(len(X), model.n_outputs)
    if len(X) == 0:
        raise ValueError("empty batch")
    r = model.evaluate(X) - Y
    loss = float(np.mean(r * r))
    grads = model.grad_params_batch(X, 2.0 * r / r.size)
    return loss, grads


def _mse(model, X, Y) -> float:
    if len(X) == 0:
        return math.nan
    r = model.evaluate(X) - Y
    return float(np.mean(r * r))


def split_indices(K: int, train_fraction: float, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(K)
    n_train = min(K, max(1, int(round(train_fraction * K))))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train(model: INNModel, dataset: Dataset, config: TrainConfig, normalize: bool = True) -> TrainResult:
    """Shuffled mini-batch training of ``model`` on ``dataset``.

    Inputs are mapped affinely from the dataset bounds onto the model grid
    (unless ``normalize=False``).  The history row for epoch ``e`` holds the
    full train/test MSE after ``e`` passes; row 0 is the initial state.  The
    convergence epoch is the first ``e`` whose train MSE is at or below
    ``config.stop_mse``.
    """
    model = model.copy()
    if normalize:
        attach_normalization(model, dataset.bounds)
    X = to_model_inputs(model, dataset.inputs)
    Y = dataset.targets
    if Y.shape[1] != model.n_outputs:
        raise ValueError(f"dataset has {Y.shape[1]} outputs, model {model.n_outputs}")
    train_idx, test_idx = split_indices(len(dataset), config.train_fraction, config.seed)
    Xtr, Ytr, Xte, Yte = X[train_idx], Y[train_idx], X[test_idx], Y[test_idx]
    model.evaluate(Xtr)  # domain check up front

    rng = np.random.default_rng(config.seed + 1)
    state = AdamState.for_params(model.params, lr=config.lr)
    history = [(0, _mse(model, Xtr, Ytr), _mse(model, Xte, Yte))]
    converged = None
    bs = config.batch_size
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(Xtr))
        for start in range(0, len(order), bs):
            b = order[start : start + bs]
            loss, grads = mse_loss(model, Xtr[b], Ytr[b])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            if config.optimizer == "adam":
                model.params, state = adam_step(state, model.params, grads)
            else:
                model.params = [p - config.lr * g for p, g in zip(model.params, grads)]
        tr, te = _mse(model, Xtr, Ytr), _mse(model, Xte, Yte)
        if not np.isfinite(tr):
            raise TrainingDivergedError(epoch, tr)
        history.append((epoch, tr, te))
        log.debug("epoch %d train %.3e test %.3e", epoch, tr, te)
        if config.stop_mse is not None and tr <= config.stop_mse:
            converged = epoch
            break
    return TrainResult(model, history, converged, train_idx, test_idx)


def metrics(model: INNModel, dataset: Dataset) -> dict:
    """MSE over all outputs and per-output R^2 (None where targets have zero variance)."""
    pred = model.evaluate(to_model_inputs(model, dataset.inputs))
    Y = dataset.targets
    r = pred - Y
    ss_res = np.sum(r * r, axis=0)
    ss_tot = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    r2 = [None if t == 0 else float(1.0 - a / t) for a, t in zip(ss_res, ss_tot)]
    return {"mse": float(np.mean(r * r)), "r2": r2}


def write_history(history, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "test_mse"])
        for e, tr, te in history:
            w.writerow([e, fmt(tr), fmt(te)])
    return path
