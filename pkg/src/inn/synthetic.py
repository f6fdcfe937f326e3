"""Named synthetic benchmark functions for the trainer and calibrator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SyntheticFunction:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    n_outputs: int
    default_bounds: tuple[float, float]
    n_inputs: int | None = None  # None: any input count

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.n_inputs is not None and X.shape[1] != self.n_inputs:
            raise ValueError(f"{self.name} takes {self.n_inputs} inputs, got {X.shape[1]}")
        return np.asarray(self.fn(X), dtype=float).reshape(len(X), self.n_outputs)


def _sin_product(X):
    return np.prod(np.sin(X), axis=1)


def _separable3d(X):
    return np.sin(np.pi * X[:, 0]) * (1.0 + X[:, 1] ** 2) * np.exp(-X[:, 2])


def _linear(X):
    return X.sum(axis=1)


def _shifted_square(X):
    return ((X - 0.5) ** 2).sum(axis=1)


def _poly_cross(X):
    out = X.sum(axis=1).copy()
    for i in range(X.shape[1] - 1):
        out += X[:, i] * X[:, i + 1]
    return out


def _composite_10x5(X):
    # smooth mix of separable and coupled terms; inputs expected in [0, 1]
    s = np.sin(np.pi * X)
    u1 = s[:, :5].prod(axis=1) + 0.5 * X[:, 5:].sum(axis=1)
    u2 = np.exp(-((X - 0.5) ** 2).sum(axis=1))
    u3 = X[:, 0] * X[:, 1] + X[:, 2] * X[:, 3] - X[:, 4] * X[:, 5]
    u4 = np.cos(np.pi * X[:, 6]) * (1.0 + X[:, 7]) + X[:, 8] ** 2 - X[:, 9]
    u5 = np.log1p(X.sum(axis=1))
    return np.stack([u1, u2, u3, u4, u5], axis=1)


SYNTHETIC: dict[str, SyntheticFunction] = {
    f.name: f
    for f in [
        SyntheticFunction("sin_product", _sin_product, 1, (0.0, np.pi)),
        SyntheticFunction("separable3d", _separable3d, 1, (0.0, 1.0), n_inputs=3),
        SyntheticFunction("linear", _linear, 1, (0.0, 1.0)),
        SyntheticFunction("shifted_square", _shifted_square, 1, (0.0, 1.0)),
        SyntheticFunction("poly_cross", _poly_cross, 1, (0.0, 1.0)),
        SyntheticFunction("composite_10x5", _composite_10x5, 5, (0.0, 1.0), n_inputs=10),
    ]
}


def get_function(name: str) -> SyntheticFunction:
    try:
        return SYNTHETIC[name]
    except KeyError:
        raise KeyError(f"unknown synthetic function {name!r}; known: {sorted(SYNTHETIC)}") from None
