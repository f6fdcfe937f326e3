"""Shape-function evaluation on 1D grids.

Each segment carries the Lagrange basis of its patch (see
:func:`inn.grid.patch_nodes`).  Values use the product form so that the
Kronecker delta holds exactly at nodes; derivatives are the analytic
derivatives of the same polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .grid import Grid1D, PatchScheme, ProductGrid, check_domain, patch_table


@dataclass(frozen=True)
class ShapeEval:
    segment: int
    node_indices: np.ndarray
    values: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None


@lru_cache(maxsize=256)
def _segment_tables(grid: Grid1D, scheme: PatchScheme):
    patches = patch_table(grid, scheme)
    z = grid.nodes[patches]
    diff = z[:, :, None] - z[:, None, :]
    k = patches.shape[1]
    eye = np.eye(k, dtype=bool)
    inv = np.where(eye, 0.0, 1.0 / np.where(eye, 1.0, diff))
    patches.setflags(write=False)
    inv.setflags(write=False)
    return patches, z, inv


def _lagrange(x, z, inv, max_deriv):
    """Lagrange values (and derivatives) at ``x`` for per-point node sets ``z``."""
    n, k = z.shape
    r = (x[:, None] - z)[:, None, :] * inv
    diag = np.arange(k)
    r[:, diag, diag] = 1.0
    out = [np.prod(r, axis=2)]
    if max_deriv >= 1:
        d1 = np.zeros((n, k))
        for a in range(k):
            ra = r.copy()
            ra[:, :, a] = 1.0
            d1 += inv[:, :, a] * np.prod(ra, axis=2)
        out.append(d1)
    if max_deriv >= 2:
        d2 = np.zeros((n, k))
        for a in range(k):
            for b in range(k):
                if a == b:
                    continue
                rab = r.copy()
                rab[:, :, a] = 1.0
                rab[:, :, b] = 1.0
                d2 += inv[:, :, a] * inv[:, :, b] * np.prod(rab, axis=2)
        out.append(d2)
    return out


def _check_deriv(scheme: PatchScheme, deriv_order: int):
    if deriv_order not in (0, 1, 2):
        raise ValueError(f"deriv_order must be 0, 1 or 2, got {deriv_order}")
    if deriv_order == 2 and scheme.order < 2:
        raise ValueError(
            "second derivatives need poly_order >= 2; piecewise-linear shape "
            "functions have zero curvature inside segments"
        )


def basis(grid: Grid1D, scheme: PatchScheme, xs, max_deriv: int = 0, clamp: bool = False):
    """Batched shape functions.

    Returns ``(segments, idx, derivs)`` where ``idx`` is ``(n, n_local)`` node
    indices and ``derivs[d]`` holds the ``d``-th derivative of the matching
    shape functions for ``d = 0..max_deriv``.
    """
    _check_deriv(scheme, max_deriv)
    xs = check_domain(grid, np.atleast_1d(np.asarray(xs, dtype=float)), clamp=clamp)
    patches, z, inv = _segment_tables(grid, scheme)
    seg = np.searchsorted(grid.nodes, xs, side="right") - 1
    seg = np.minimum(seg, grid.n_segments - 1)
    vals = _lagrange(xs, z[seg], inv[seg], max_deriv)
    return seg, patches[seg], vals


def shape_eval(grid: Grid1D, scheme: PatchScheme, x: float, deriv_order: int = 0) -> ShapeEval:
    _check_deriv(scheme, deriv_order)
    seg, idx, vals = basis(grid, scheme, [x], max_deriv=deriv_order)
    pad = vals + [None] * (3 - len(vals))
    return ShapeEval(
        segment=int(seg[0]),
        node_indices=idx[0].copy(),
        values=pad[0][0],
        d1=None if pad[1] is None else pad[1][0],
        d2=None if pad[2] is None else pad[2][0],
    )


def shape_vector(
    pgrid: ProductGrid, scheme: PatchScheme, dim: int, x_i: float, deriv_order: int = 0
) -> sparse.csr_array:
    """Length-``J_i`` interpolation vector of dimension ``dim`` as a 1-row sparse array."""
    return shape_matrix(pgrid[dim], scheme, [x_i], deriv_order)


def shape_matrix(grid: Grid1D, scheme: PatchScheme, xs, deriv_order: int = 0, clamp: bool = False):
    """Sparse ``(n, J)`` matrix whose row ``k`` is the interpolation vector at ``xs[k]``."""
    _, idx, vals = basis(grid, scheme, xs, max_deriv=deriv_order, clamp=clamp)
    return to_sparse(idx, vals[deriv_order], grid.n_nodes)


def to_sparse(idx: np.ndarray, w: np.ndarray, n_cols: int) -> sparse.csr_array:
    n, k = idx.shape
    indptr = np.arange(0, n * k + 1, k)
    return sparse.csr_array((w.ravel(), idx.ravel(), indptr), shape=(n, n_cols))
