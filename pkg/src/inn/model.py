"""Trainable interpolating models: full tensor product, Tucker and CP.

All three are multilinear in their parameters, so forward passes and
gradients are closed-form contractions of per-dimension shape functions.
Derivatives with respect to inputs reuse the same contractions with
differentiated shape functions in the chosen dimensions.
"""

from __future__ import annotations

import json
import string
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import DomainError, Grid1D, PatchScheme, ProductGrid
from .interp import basis, to_sparse

KINDS = ("full", "tucker", "cp")
_LETTERS = string.ascii_lowercase.replace("n", "").replace("l", "")


class INNModel:
    """Common machinery for the three model kinds.

    ``params`` is a list of arrays; optimizers update it in place or via
    :meth:`with_params`.
    """

    kind = ""

    def __init__(self, pgrid: ProductGrid, scheme, n_outputs: int, params: list[np.ndarray]):
        self.pgrid = pgrid
        if isinstance(scheme, PatchScheme):
            scheme = (scheme,) * pgrid.n_dims
        self.schemes = tuple(scheme)
        if len(self.schemes) != pgrid.n_dims:
            raise ValueError("need one PatchScheme per input dimension")
        self.n_outputs = int(n_outputs)
        self.params = [np.asarray(p, dtype=float) for p in params]
        self._check_shapes()
        self.meta: dict = {}

    @property
    def n_inputs(self) -> int:
        return self.pgrid.n_dims

    @property
    def scheme(self) -> PatchScheme:
        return self.schemes[0]

    def _check_shapes(self):
        expected = self.param_shapes()
        got = [p.shape for p in self.params]
        if got != expected:
            raise ValueError(f"{self.kind} parameter shapes {got} != expected {expected}")

    def param_shapes(self) -> list[tuple[int, ...]]:
        raise NotImplementedError

    def count_params(self) -> int:
        raise NotImplementedError

    def with_params(self, params):
        new = self.__class__.__new__(self.__class__)
        new.__dict__.update(self.__dict__)
        new.params = [np.array(p, dtype=float) for p in params]
        new.meta = dict(self.meta)
        new._check_shapes()
        return new

    def copy(self):
        return self.with_params(self.params)

    # -- evaluation ---------------------------------------------------------

    def _as_points(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1 and self.n_inputs == 1 and xs.size != 1:
            xs = xs[:, None]
        xs = np.atleast_2d(xs)
        if xs.size == 0:
            return xs.reshape(0, self.n_inputs)
        if xs.shape[1] != self.n_inputs:
            raise ValueError(f"expected points with {self.n_inputs} coordinates, got shape {xs.shape}")
        return xs

    def bases(self, xs, max_deriv=0, clamp: bool = False):
        """Per-dimension ``(idx, [N, dN, ...])`` for points ``xs`` of shape ``(n, I)``."""
        xs = self._as_points(xs)
        if np.isscalar(max_deriv):
            max_deriv = [max_deriv] * self.n_inputs
        out = []
        for i, (g, s, md) in enumerate(zip(self.pgrid.dims, self.schemes, max_deriv)):
            try:
                _, idx, vals = basis(g, s, xs[:, i], max_deriv=md, clamp=clamp)
            except DomainError as exc:
                raise DomainError(f"input dimension {i}: {exc}") from None
            out.append((idx, vals))
        return out

    def evaluate(self, xs, orders: Sequence[int] | None = None, clamp: bool = False) -> np.ndarray:
        """Mixed partial derivative ``d^orders u`` at ``xs``; returns ``(n, L)``."""
        xs = self._as_points(xs)
        if len(xs) == 0:
            return np.zeros((0, self.n_outputs))
        orders = self._orders(orders)
        B = self.bases(xs, orders, clamp)
        return self._contract(self._pick(B, orders))

    def grad_params_batch(self, xs, upstream, orders=None, clamp: bool = False) -> list[np.ndarray]:
        """Gradient of ``sum_n <upstream[n], d^orders u(xs[n])>`` w.r.t. all parameters."""
        xs = self._as_points(xs)
        orders = self._orders(orders)
        upstream = np.asarray(upstream, dtype=float).reshape(len(xs), self.n_outputs)
        B = self.bases(xs, orders, clamp)
        return self._grad(self._pick(B, orders), upstream)

    def forward(self, x, clamp: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, self.n_inputs)
        return self.evaluate(x, clamp=clamp)[0]

    def forward_batch(self, xs, clamp: bool = False) -> np.ndarray:
        return self.evaluate(xs, clamp=clamp)

    def jacobian_batch(self, xs, clamp: bool = False) -> np.ndarray:
        """``(n, L, I)`` input Jacobians."""
        xs = self._as_points(xs)
        B = self.bases(xs, 1, clamp)
        cols = []
        for i in range(self.n_inputs):
            orders = [0] * self.n_inputs
            orders[i] = 1
            cols.append(self._contract(self._pick(B, orders)))
        return np.stack(cols, axis=-1)

    def second_partials_batch(self, xs, clamp: bool = False) -> np.ndarray:
        """``(n, L, I)`` unmixed second partials ``d2u/dx_i^2``."""
        xs = self._as_points(xs)
        B = self.bases(xs, 2, clamp)
        cols = []
        for i in range(self.n_inputs):
            orders = [0] * self.n_inputs
            orders[i] = 2
            cols.append(self._contract(self._pick(B, orders)))
        return np.stack(cols, axis=-1)

    def _orders(self, orders):
        if orders is None:
            return [0] * self.n_inputs
        orders = list(orders)
        if len(orders) != self.n_inputs:
            raise ValueError("one derivative order per input dimension required")
        return orders

    @staticmethod
    def _pick(B, orders):
        return [(idx, vals[o]) for (idx, vals), o in zip(B, orders)]

    def _contract(self, W) -> np.ndarray:
        raise NotImplementedError

    def _grad(self, W, upstream) -> list[np.ndarray]:
        raise NotImplementedError


class FullModel(INNModel):
    """Nodal values on the full tensor-product grid, shape ``(J_1, ..., J_I, L)``."""

    kind = "full"

    @property
    def values(self) -> np.ndarray:
        return self.params[0]

    def param_shapes(self):
        return [tuple(self.pgrid.shape) + (self.n_outputs,)]

    def count_params(self) -> int:
        return self.n_outputs * int(np.prod(self.pgrid.shape))

    def _sparse(self, W):
        shape = self.pgrid.shape
        n = W[0][0].shape[0]
        flat = np.zeros((n, 1), dtype=np.intp)
        weight = np.ones((n, 1))
        for (idx, w), J in zip(W, shape):
            flat = (flat[:, :, None] * J + idx[:, None, :]).reshape(n, -1)
            weight = (weight[:, :, None] * w[:, None, :]).reshape(n, -1)
        return to_sparse(flat, weight, int(np.prod(shape)))

    def _contract(self, W):
        U = self.values.reshape(-1, self.n_outputs)
        return self._sparse(W) @ U

    def _grad(self, W, upstream):
        g = self._sparse(W).T @ upstream
        return [np.asarray(g).reshape(self.values.shape)]


class TuckerModel(INNModel):
    """Per-output core tensors contracted with interpolated mode vectors.

    ``params = [cores (L, M_1..M_I), factor_1 (L, M_1, J_1), ..., factor_I]``.
    """

    kind = "tucker"

    def __init__(self, pgrid, scheme, n_outputs, params):
        self.modes = tuple(int(m) for m in np.shape(params[0])[1:])
        super().__init__(pgrid, scheme, n_outputs, params)

    @property
    def cores(self) -> np.ndarray:
        return self.params[0]

    @property
    def factors(self) -> list[np.ndarray]:
        return self.params[1:]

    def param_shapes(self):
        L = self.n_outputs
        for M, J in zip(self.modes, self.pgrid.shape):
            if not 1 <= M <= J:
                raise ValueError(f"Tucker modes must satisfy 1 <= M_i <= J_i, got M={M}, J={J}")
        return [(L, *self.modes)] + [(L, M, J) for M, J in zip(self.modes, self.pgrid.shape)]

    def count_params(self) -> int:
        M, J = np.array(self.modes), np.array(self.pgrid.shape)
        return self.n_outputs * int(np.prod(M) + np.sum(M * J))

    def _mode_vectors(self, W):
        # a_i[n, l, m] = sum_k w[n, k] * factor_i[l, m, idx[n, k]]
        return [np.einsum("nk,lmnk->nlm", w, F[:, :, idx]) for (idx, w), F in zip(W, self.factors)]

    def _subscripts(self):
        letters = _LETTERS[: self.n_inputs]
        return "l" + letters, ["nl" + c for c in letters]

    def _contract(self, W):
        a = self._mode_vectors(W)
        core, vecs = self._subscripts()
        return np.einsum(",".join([core] + vecs) + "->nl", self.cores, *a, optimize=True)

    def _grad(self, W, upstream):
        a = self._mode_vectors(W)
        core, vecs = self._subscripts()
        g_core = np.einsum(",".join(["nl"] + vecs) + "->" + core, upstream, *a, optimize=True)
        grads = [g_core]
        n = upstream.shape[0]
        for i, ((idx, w), F) in enumerate(zip(W, self.factors)):
            others = [v for j, v in enumerate(vecs) if j != i]
            ops = [a[j] for j in range(self.n_inputs) if j != i]
            spec = ",".join(["nl", core] + others) + "->" + vecs[i]
            ga = np.einsum(spec, upstream, self.cores, *ops, optimize=True)
            L, M, J = F.shape
            S = to_sparse(idx, w, J)
            g = np.asarray(S.T @ ga.reshape(n, L * M)).reshape(J, L, M)
            grads.append(g.transpose(1, 2, 0))
        return grads


class CPModel(INNModel):
    """Sum over modes of elementwise products of 1D interpolants.

    ``params = [factor_1 (M, J_1, L), ..., factor_I (M, J_I, L)]``; the
    super-diagonal core is fixed to ones.
    """

    kind = "cp"

    def __init__(self, pgrid, scheme, n_outputs, params):
        self.modes = int(np.shape(params[0])[0])
        super().__init__(pgrid, scheme, n_outputs, params)

    @property
    def factors(self) -> list[np.ndarray]:
        return self.params

    def param_shapes(self):
        return [(self.modes, J, self.n_outputs) for J in self.pgrid.shape]

    def count_params(self) -> int:
        return self.modes * self.n_outputs * int(sum(self.pgrid.shape))

    def mode_values(self, W) -> list[np.ndarray]:
        """Per-dimension interpolated factors ``(n, M, L)``."""
        return [np.einsum("nk,mnkl->nml", w, F[:, idx, :]) for (idx, w), F in zip(W, self.factors)]

    def _contract(self, W):
        a = self.mode_values(W)
        prod = a[0]
        for ai in a[1:]:
            prod = prod * ai
        return prod.sum(axis=1)

    def _grad(self, W, upstream):
        a = self.mode_values(W)
        others = _products_of_others(a)
        grads = []
        n = upstream.shape[0]
        for (idx, w), F, rest in zip(W, self.factors, others):
            M, J, L = F.shape
            G = upstream[:, None, :] * rest
            S = to_sparse(idx, w, J)
            g = np.asarray(S.T @ G.reshape(n, M * L)).reshape(J, M, L)
            grads.append(g.transpose(1, 0, 2))
        return grads


def _products_of_others(a: list[np.ndarray]) -> list[np.ndarray]:
    """For each i, the elementwise product of all ``a[j]`` with ``j != i`` (no division)."""
    I = len(a)
    prefix = [np.ones_like(a[0])]
    for ai in a[:-1]:
        prefix.append(prefix[-1] * ai)
    suffix = [np.ones_like(a[0])] * I
    acc = np.ones_like(a[0])
    for i in range(I - 1, -1, -1):
        suffix[i] = acc
        acc = acc * a[i]
    return [p * s for p, s in zip(prefix, suffix)]


# -- functional surface -------------------------------------------------------


def forward(model: INNModel, x, clamp: bool = False) -> np.ndarray:
    return model.forward(x, clamp=clamp)


def forward_batch(model: INNModel, xs, clamp: bool = False) -> np.ndarray:
    return model.forward_batch(xs, clamp=clamp)


def grad_params(model: INNModel, x, upstream) -> list[np.ndarray]:
    x = np.asarray(x, dtype=float).reshape(1, model.n_inputs)
    return model.grad_params_batch(x, np.reshape(upstream, (1, model.n_outputs)))


def grad_input(model: INNModel, x, second: bool = False):
    """Jacobian ``(L, I)`` at ``x``; with ``second=True`` also ``d2u/dx_i^2`` as ``(L, I)``."""
    x = np.asarray(x, dtype=float).reshape(1, model.n_inputs)
    jac = model.jacobian_batch(x)[0]
    if not second:
        return jac
    return jac, model.second_partials_batch(x)[0]


def count_params(model: INNModel) -> int:
    return model.count_params()


def init_model(
    kind: str,
    pgrid: ProductGrid,
    scheme,
    modes=None,
    seed: int = 0,
    n_outputs: int = 1,
) -> INNModel:
    """Seeded initialization.

    Full models start at zero.  CP and Tucker factors are drawn from
    ``uniform(-b, b)`` with ``b = 0.1 / M**(1/I)`` so the initial output is
    bounded by ``0.1**I`` times the basis Lebesgue constants; Tucker cores
    start super-diagonal with unit entries.
    """
    rng = np.random.default_rng(seed)
    I, L = pgrid.n_dims, int(n_outputs)
    if L < 1:
        raise ValueError("n_outputs must be >= 1")
    if kind == "full":
        return FullModel(pgrid, scheme, L, [np.zeros(tuple(pgrid.shape) + (L,))])
    if kind == "cp":
        if modes is None or int(modes) < 1:
            raise ValueError("CP model needs modes >= 1")
        M = int(modes)
        b = 0.1 / M ** (1.0 / I)
        params = [rng.uniform(-b, b, size=(M, J, L)) for J in pgrid.shape]
        return CPModel(pgrid, scheme, L, params)
    if kind == "tucker":
        if modes is None:
            raise ValueError("Tucker model needs modes")
        Ms = [int(modes)] * I if np.isscalar(modes) else [int(m) for m in modes]
        if len(Ms) != I:
            raise ValueError("need one Tucker mode count per dimension")
        for M, J in zip(Ms, pgrid.shape):
            if not 1 <= M <= J:
                raise ValueError(f"Tucker modes must satisfy 1 <= M_i <= J_i, got M={M}, J={J}")
        b = 0.1 / float(np.prod(Ms)) ** (1.0 / I)
        core = np.zeros((L, *Ms))
        diag = np.arange(min(Ms))
        core[(slice(None),) + (diag,) * I] = 1.0
        factors = [rng.uniform(-b, b, size=(L, M, J)) for M, J in zip(Ms, pgrid.shape)]
        return TuckerModel(pgrid, scheme, L, [core] + factors)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def cp_from_separable(pgrid: ProductGrid, scheme, samples: Sequence[np.ndarray]) -> CPModel:
    """Rank-1 CP model whose factor ``i`` holds the 1D nodal samples ``samples[i]``."""
    params = [np.asarray(s, dtype=float).reshape(1, -1, 1) for s in samples]
    return CPModel(pgrid, scheme, 1, params)


def full_from_nodal(pgrid: ProductGrid, scheme, tensor) -> FullModel:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape == tuple(pgrid.shape):
        tensor = tensor[..., None]
    return FullModel(pgrid, scheme, tensor.shape[-1], [tensor])


def nodal_tensor(model: INNModel) -> np.ndarray:
    """The represented values at all grid nodes, shape ``(J_1, ..., J_I, L)``."""
    if model.kind == "full":
        return model.values.copy()
    if model.kind == "cp":
        out = 0.0
        for m in range(model.modes):
            term = np.ones((1,) * model.n_inputs + (model.n_outputs,))
            for i, F in enumerate(model.factors):
                shape = [1] * model.n_inputs + [model.n_outputs]
                shape[i] = F.shape[1]
                term = term * F[m].reshape(shape)
            out = out + term
        return np.asarray(out)
    core, vecs = TuckerModel._subscripts(model)
    facs = [c + c.upper() for c in _LETTERS[: model.n_inputs]]
    spec = ",".join([core] + ["l" + f for f in facs]) + "->" + "".join(c.upper() for c in _LETTERS[: model.n_inputs]) + "l"
    return np.einsum(spec, model.cores, *model.factors, optimize=True)


# -- checkpoints ----------------------------------------------------------------

_FORMAT = "inn-checkpoint"


def model_to_dict(model: INNModel) -> dict:
    return {
        "format": _FORMAT,
        "version": 1,
        "kind": model.kind,
        "n_outputs": model.n_outputs,
        "grids": [g.nodes.tolist() for g in model.pgrid.dims],
        "schemes": [[s.q_steps, s.hop, s.poly_order] for s in model.schemes],
        "params": [{"shape": list(p.shape), "data": p.ravel().tolist()} for p in model.params],
        "meta": model.meta,
    }


def model_from_dict(d: dict) -> INNModel:
    if d.get("format") != _FORMAT:
        raise ValueError("not an INN checkpoint")
    pgrid = ProductGrid(tuple(Grid1D(np.array(n)) for n in d["grids"]))
    schemes = tuple(PatchScheme(*s) for s in d["schemes"])
    params = [np.array(p["data"], dtype=float).reshape(p["shape"]) for p in d["params"]]
    cls = {"full": FullModel, "tucker": TuckerModel, "cp": CPModel}[d["kind"]]
    model = cls(pgrid, schemes, d["n_outputs"], params)
    model.meta = dict(d.get("meta", {}))
    return model


def save_checkpoint(model: INNModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> INNModel:
    return model_from_dict(json.loads(Path(path).read_text()))
