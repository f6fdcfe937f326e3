"""First-order optimizers and finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        state = cls(**kw)
        state.m = [np.zeros_like(p, dtype=float) for p in params]
        state.v = [np.zeros_like(p, dtype=float) for p in params]
        return state


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float | None = None):
    """One bias-corrected ADAM update; returns ``(new_params, state)``.

    The state is updated in place.  A non-finite gradient aborts the step
    before anything is modified.
    """
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p, dtype=float) for p in params]
        state.v = [np.zeros_like(p, dtype=float) for p in params]
    for i, (p, g, m) in enumerate(zip(params, grads, state.m)):
        if np.shape(p) != np.shape(g) or np.shape(p) != m.shape:
            raise ValueError(f"shape mismatch in slot {i}: param {np.shape(p)}, grad {np.shape(g)}, moment {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient entries in slot {i}")
    lr = state.lr if lr is None else lr
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        out.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
    return out, state


def _check_bounds(bounds):
    lo, hi = np.asarray(bounds[0], dtype=float), np.asarray(bounds[1], dtype=float)
    if np.any(~(lo < hi)):
        raise ValueError("invalid bounds: need lo < hi for every coordinate")
    return lo, hi


def projected_step(params, grads, bounds, lr: float) -> np.ndarray:
    """Gradient-descent step followed by a componentwise clamp to ``bounds = (lo, hi)``."""
    lo, hi = _check_bounds(bounds)
    return np.clip(np.asarray(params, dtype=float) - lr * np.asarray(grads, dtype=float), lo, hi)


def project(params, bounds) -> np.ndarray:
    lo, hi = _check_bounds(bounds)
    return np.clip(params, lo, hi)


def gradcheck(
    f: Callable[[np.ndarray], float],
    params,
    grad=None,
    step: float = 1e-6,
    n_probes: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between ``grad`` and central differences of ``f``.

    ``grad`` may be an array or a callable returning one.  Every coordinate
    is probed when ``n_probes`` is None (or exceeds the parameter count);
    otherwise random unit directions are used.  The error of each probe is
    ``|fd - an| / max(|fd|, |an|, tiny)``.
    """
    x0 = np.array(params, dtype=float)
    g = np.asarray(grad(x0) if callable(grad) else grad, dtype=float).reshape(x0.shape)
    f0 = f(x0)
    if not np.isfinite(f0):
        raise FloatingPointError("objective is not finite at params")
    n = x0.size
    if n_probes is None or n_probes >= n:
        dirs = np.eye(n)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(n_probes, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scale = max(np.max(np.abs(g)), 1e-300)
    worst = 0.0
    for d in dirs:
        d = d.reshape(x0.shape)
        fp, fm = f(x0 + step * d), f(x0 - step * d)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("objective is not finite near params")
        fd = (fp - fm) / (2 * step)
        an = float(np.sum(g * d))
        # entries far below the gradient's scale are judged against that scale
        denom = max(abs(fd), abs(an), 1e-8 * scale)
        worst = max(worst, abs(fd - an) / denom)
    return worst


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten(vec: np.ndarray, like: Sequence[np.ndarray]) -> list[np.ndarray]:
    out, pos = [], 0
    for a in like:
        out.append(np.asarray(vec[pos : pos + a.size]).reshape(a.shape))
        pos += a.size
    return out
