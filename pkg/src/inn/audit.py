"""Finite-difference audits of model gradients on randomized instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PatchScheme, uniform_product_grid
from .model import INNModel, grad_input, grad_params, init_model
from .optim import flatten, gradcheck, unflatten

_SCHEMES = (PatchScheme(1, 1, 1), PatchScheme(2, 1, 1), PatchScheme(2, 2, 2), PatchScheme(2, 2, 3))


@dataclass
class AuditRow:
    kind: str
    instances: int
    grad_params_max_rel: float
    grad_input_max_rel: float


def random_instance(kind: str, rng: np.random.Generator) -> tuple[INNModel, np.ndarray]:
    """A model with random (not initial) parameters and a point away from nodes."""
    I = int(rng.integers(1, 4))
    shape = [int(rng.integers(5, 9)) for _ in range(I)]
    scheme = _SCHEMES[int(rng.integers(len(_SCHEMES)))]
    L = int(rng.integers(1, 3))
    modes = None
    if kind == "cp":
        modes = int(rng.integers(1, 4))
    elif kind == "tucker":
        modes = [int(rng.integers(1, J + 1)) for J in shape]
    model = init_model(kind, uniform_product_grid(shape), scheme, modes=modes, seed=int(rng.integers(2**31)), n_outputs=L)
    model.params = [rng.normal(size=p.shape) for p in model.params]
    x = np.empty(I)
    for i, J in enumerate(shape):
        # keep central differences inside one segment: C0 models kink at nodes
        h = 1.0 / (J - 1)
        x[i] = (rng.integers(J - 1) + rng.uniform(0.05, 0.95)) * h
    return model, x


def gradient_audit(kind: str, instances: int = 100, seed: int = 0, n_probes: int = 24) -> AuditRow:
    """Worst relative error of ``grad_params`` and ``grad_input`` against central differences.

    Each instance contracts the outputs with a random upstream vector, so
    the checked functions are scalar.
    """
    rng = np.random.default_rng(seed)
    worst_p = worst_x = 0.0
    for k in range(instances):
        model, x = random_instance(kind, rng)
        w = rng.normal(size=model.n_outputs)
        like = model.params

        def f_params(theta, model=model, x=x, w=w, like=like):
            return float(w @ model.with_params(unflatten(theta, like)).forward(x))

        def f_input(z, model=model, w=w):
            return float(w @ model.forward(z))

        g = flatten(grad_params(model, x, w))
        worst_p = max(worst_p, gradcheck(f_params, flatten(like), g, n_probes=n_probes, seed=k))
        worst_x = max(worst_x, gradcheck(f_input, x, w @ grad_input(model, x)))
    return AuditRow(kind, instances, worst_p, worst_x)
