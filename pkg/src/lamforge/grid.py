"""Kuhn-triangulated boxes and continuous piecewise-affine maps on them."""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from lamforge import kernels

MAX_GRID_DIM = 4
DEFAULT_GRID_DIM_LIMIT = 3


class GridError(ValueError):
    """Grid construction or map/grid mismatch."""


class SimplicialGrid:
    """Uniform lattice on a box, each cube split into ``d!`` Kuhn simplices.

    Cell ``c`` lives in cube ``c // d!`` and follows permutation ``c % d!``:
    its vertices are ``v0, v0 + e_pi(0), v0 + e_pi(0) + e_pi(1), ...``.
    """

    def __init__(self, dim, n, box=None):
        self.dim = int(dim)
        self.n = int(n)
        if box is None:
            box = [(0.0, 1.0)] * self.dim
        box = np.asarray(box, dtype=float)
        if box.shape != (self.dim, 2) or np.any(box[:, 1] <= box[:, 0]):
            raise GridError(f"box must be {self.dim} pairs (lo, hi) with lo < hi")
        self.box = box
        self.h = (box[:, 1] - box[:, 0]) / self.n
        d, n = self.dim, self.n

        axes = [np.arange(n + 1)] * d
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        self.lattice = lattice
        self.vertices = box[:, 0] + lattice * self.h
        self.boundary = np.any((lattice == 0) | (lattice == n), axis=1)
        self._strides = np.array([(n + 1) ** (d - 1 - i) for i in range(d)])

        self.perms = list(itertools.permutations(range(d)))
        cube_axes = [np.arange(n)] * d
        cubes = np.stack(np.meshgrid(*cube_axes, indexing="ij"), axis=-1).reshape(-1, d)
        offsets = np.zeros((len(self.perms), d + 1, d), dtype=np.int64)
        for k, perm in enumerate(self.perms):
            for i, axis in enumerate(perm):
                offsets[k, i + 1 :, axis] += 1
        corner = cubes @ self._strides
        local = offsets @ self._strides
        self.cells = (corner[:, None, None] + local[None, :, :]).reshape(-1, d + 1)
        self.cell_perm = np.tile(np.arange(len(self.perms)), len(cubes))
        self.cell_cube = np.repeat(np.arange(len(cubes)), len(self.perms))

        edges = offsets[:, 1:, :] * self.h  # (perm, edge, coord)
        # gradient = F @ inv(E) with E columns = edge vectors
        self._einv = np.linalg.inv(np.transpose(edges, (0, 2, 1)))
        self.cell_volume = float(np.prod(self.h)) / math.factorial(d)
        self.vertex_degree = np.bincount(self.cells.ravel(), minlength=self.n_vertices)
        self._neighbour_pairs = None

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def volume(self):
        return float(np.prod(self.box[:, 1] - self.box[:, 0]))

    def vertex_id(self, index):
        return int(np.asarray(index) @ self._strides)

    def cell_volumes(self):
        return np.full(self.n_cells, self.cell_volume)

    def centroids(self):
        return self.vertices[self.cells].mean(axis=1)

    def gradients(self, values, cells=None):
        """Per-cell gradients ``(count, d, d)`` of vertex values ``(nv, d)``."""
        idx = self.cells if cells is None else self.cells[cells]
        perm = self.cell_perm if cells is None else self.cell_perm[cells]
        base = values[idx[:, 0]]
        F = values[idx[:, 1:]] - base[:, None, :]  # (c, edge, comp)
        return np.einsum("cek,cej->ckj", F, self._einv[perm])

    def cell_neighbours(self):
        """Pairs of cells sharing a facet, as two index arrays (cached)."""
        if self._neighbour_pairs is None:
            self._neighbour_pairs = self._facet_pairs()
        return self._neighbour_pairs

    def _facet_pairs(self):
        d = self.dim
        faces = []
        owners = []
        for drop in range(d + 1):
            f = np.delete(self.cells, drop, axis=1)
            faces.append(np.sort(f, axis=1))
            owners.append(np.arange(self.n_cells))
        faces = np.concatenate(faces)
        owners = np.concatenate(owners)
        order = np.lexsort(faces.T[::-1])
        faces = faces[order]
        owners = owners[order]
        same = np.all(faces[1:] == faces[:-1], axis=1)
        return owners[:-1][same], owners[1:][same]


def kuhn_grid(d, n, box=None, *, allow_4d=False):
    """Kuhn grid on ``box`` (default unit cube) with ``n`` steps per axis.

    ``d = 4`` grids are expensive and must be requested with ``allow_4d``.
    """
    d = int(d)
    n = int(n)
    if n < 1:
        raise GridError("need at least one subdivision per axis")
    limit = MAX_GRID_DIM if allow_4d else DEFAULT_GRID_DIM_LIMIT
    if not 2 <= d <= limit:
        hint = "" if allow_4d or d != 4 else " (pass allow_4d=True for d = 4)"
        raise GridError(f"grid dimension {d} outside [2, {limit}]{hint}")
    return SimplicialGrid(d, n, box)


class PiecewiseAffineMap:
    """Vertex values of a continuous map that is affine on every cell."""

    def __init__(self, grid, values):
        values = np.array(values, dtype=float)
        if values.shape != (grid.n_vertices, grid.dim):
            raise GridError(
                f"values must have shape {(grid.n_vertices, grid.dim)}, got {values.shape}"
            )
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, np.asarray(fn(grid.vertices), dtype=float))

    @classmethod
    def identity(cls, grid):
        return cls(grid, grid.vertices.copy())

    def copy(self):
        return PiecewiseAffineMap(self.grid, self.values.copy())

    def gradients(self, cells=None):
        return self.grid.gradients(self.values, cells)

    def determinants(self, cells=None):
        return kernels.batch_det(self.gradients(cells))

    def boundary_values(self):
        return self.values[self.grid.boundary]


@dataclass(frozen=True)
class GradientStats:
    lp_norm: float
    det_histogram: tuple
    pointwise_det_integral: float


def gradient_stats(u, p, bins=64, det_range=None):
    """``L^p`` norm of the gradient, histogram of cell determinants and their integral.

    The quadrature is exact since gradients are constant per cell.
    """
    grads = u.gradients()
    vol = u.grid.cell_volume
    norms = np.sqrt(np.einsum("cij,cij->c", grads, grads))
    lp = float((vol * np.sum(norms**p)) ** (1.0 / p))
    dets = kernels.batch_det(grads)
    if det_range is None and dets.size:
        lo, hi = float(dets.min()), float(dets.max())
        if hi - lo <= 1e-9 * (1.0 + abs(hi)):
            # (nearly) constant field; numpy cannot bin a zero-width range finely
            det_range = (lo - 0.5, hi + 0.5)
    counts, edges = np.histogram(dets, bins=bins, range=det_range, weights=np.full(dets.shape, vol))
    return GradientStats(lp, (counts, edges), float(vol * np.sum(dets)))
