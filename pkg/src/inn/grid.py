"""Per-dimension 1D discretizations and s-hop patch extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DomainError(ValueError):
    """Raised when an evaluation point lies outside a grid's closed domain."""


@dataclass(frozen=True)
class PatchScheme:
    """Interpolation hyperparameters: message-passing steps, hop, polynomial order.

    ``q_steps=1`` is the linear finite-element degeneration and requires
    ``hop=1, poly_order=1``.  ``q_steps=2`` builds degree-``poly_order``
    Lagrange patches from a window of ``2*hop`` nodes.
    """

    q_steps: int = 1
    hop: int = 1
    poly_order: int = 1

    def __post_init__(self):
        q, s, p = self.q_steps, self.hop, self.poly_order
        if q not in (1, 2):
            raise ValueError(f"q_steps must be 1 or 2, got {q}")
        if s < 1 or p < 1:
            raise ValueError(f"hop and poly_order must be >= 1, got s={s}, P={p}")
        if q == 1 and (s != 1 or p != 1):
            raise ValueError("q_steps=1 requires hop=1 and poly_order=1")
        if q == 2 and p + 1 > 2 * s:
            raise ValueError(f"q_steps=2 requires poly_order + 1 <= 2*hop (P={p}, s={s})")

    @property
    def n_local(self) -> int:
        """Number of nonzero shape functions on a segment."""
        return 2 if self.q_steps == 1 else self.poly_order + 1

    @property
    def order(self) -> int:
        """Complete polynomial order reproduced by the basis."""
        return 1 if self.q_steps == 1 else self.poly_order


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Strictly increasing nodal coordinates of one input dimension."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size < 2:
            raise ValueError("a grid needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_segments(self) -> int:
        return self.nodes.size - 1

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    def segment(self, c: int) -> tuple[int, int]:
        if not 0 <= c < self.n_segments:
            raise IndexError(f"segment {c} out of range [0, {self.n_segments})")
        return c, c + 1

    def node_segments(self, j: int) -> tuple[int, ...]:
        """Segments touching node ``j`` (1 at the boundary, 2 inside)."""
        if not 0 <= j < self.n_nodes:
            raise IndexError(f"node {j} out of range")
        return tuple(c for c in (j - 1, j) if 0 <= c < self.n_segments)

    def __eq__(self, other):
        return isinstance(other, Grid1D) and np.array_equal(self.nodes, other.nodes)

    def __hash__(self):
        return hash(self.nodes.tobytes())


@dataclass(frozen=True)
class ProductGrid:
    """Tensor product of per-dimension grids (a regular mesh)."""

    dims: tuple[Grid1D, ...] = field(default_factory=tuple)

    def __post_init__(self):
        dims = tuple(self.dims)
        if len(dims) < 1:
            raise ValueError("a product grid needs at least one dimension")
        object.__setattr__(self, "dims", dims)

    @property
    def n_dims(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.n_nodes for g in self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def bounds(self) -> np.ndarray:
        return np.array([[g.lo, g.hi] for g in self.dims])

    def __getitem__(self, i: int) -> Grid1D:
        return self.dims[i]

    def __len__(self) -> int:
        return len(self.dims)


def build_uniform_grid(lo: float, hi: float, n_nodes: int) -> Grid1D:
    if not hi > lo:
        raise ValueError(f"empty interval: lo={lo}, hi={hi}")
    if n_nodes < 2:
        raise ValueError(f"need at least 2 nodes, got {n_nodes}")
    return Grid1D(np.linspace(lo, hi, n_nodes))


def uniform_product_grid(
    n_nodes: Sequence[int], bounds: Sequence[tuple[float, float]] | None = None
) -> ProductGrid:
    if bounds is None:
        bounds = [(0.0, 1.0)] * len(n_nodes)
    if len(bounds) != len(n_nodes):
        raise ValueError("bounds and node counts differ in length")
    return ProductGrid(tuple(build_uniform_grid(lo, hi, n) for (lo, hi), n in zip(bounds, n_nodes)))


def check_domain(grid: Grid1D, x, clamp: bool = False) -> np.ndarray:
    """Return ``x`` as a float array, raising on points outside the grid."""
    x = np.asarray(x, dtype=float)
    if clamp:
        return np.clip(x, grid.lo, grid.hi)
    bad = ~((x >= grid.lo) & (x <= grid.hi))
    if np.any(bad):
        first = int(np.flatnonzero(bad.ravel())[0])
        raise DomainError(
            f"point {first} (x={x.ravel()[first]!r}) outside [{grid.lo}, {grid.hi}]"
        )
    return x


def locate_segment(grid: Grid1D, x):
    """Index of the segment containing ``x``.

    Shared interior nodes belong to the right-hand segment; the last node
    belongs to the last segment.  Accepts scalars or arrays.
    """
    xa = check_domain(grid, x)
    c = np.searchsorted(grid.nodes, xa, side="right") - 1
    c = np.minimum(c, grid.n_segments - 1)
    return int(c) if np.ndim(c) == 0 else c


def patch_nodes(grid: Grid1D, segment: int, scheme: PatchScheme) -> list[int]:
    grid.segment(segment)
    if scheme.q_steps == 1:
        return [segment, segment + 1]
    need = scheme.poly_order + 1
    if grid.n_nodes < need:
        raise ValueError(
            f"grid with {grid.n_nodes} nodes cannot supply {need} patch nodes"
        )
    width = 2 * scheme.hop
    start = segment - scheme.hop + 1
    # shift the window inward at the boundaries rather than shrinking it
    start = max(0, min(start, grid.n_nodes - width))
    stop = min(grid.n_nodes, start + width)
    window = np.arange(start, stop)
    mid = 0.5 * (grid.nodes[segment] + grid.nodes[segment + 1])
    dist = np.abs(grid.nodes[window] - mid)
    # stable sort on distance keeps the lower index first on ties
    chosen = window[np.argsort(dist, kind="stable")[:need]]
    return sorted(int(j) for j in chosen)


def patch_table(grid: Grid1D, scheme: PatchScheme) -> np.ndarray:
    """All segment patches stacked as an ``(n_segments, n_local)`` index array."""
    return np.array([patch_nodes(grid, c, scheme) for c in range(grid.n_segments)], dtype=np.intp)
