"""Realize laminates as oscillating piecewise-affine maps.

A rank-one split ``A -> A +- m a (x) n`` is realized on a set of cells by
adding ``2 m a psi(x . n)`` to the interior vertex values, where ``psi`` is a
triangle wave of slope ``+-1/2`` capped by ``s/2 * dist(x, boundary)`` so
that it vanishes on the region boundary.  Case I splits add two such waves
along orthogonal normals at once, which produces all four sign combinations.
Nested splits run on the cells that took the corresponding child gradient,
with the period divided by ``freq_ratio`` at every level.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from lamforge.laminate import CASE_I

DEFAULT_N = 8
DEFAULT_FREQ_RATIO = 8
DEFAULT_CUTOFF_SLOPE = 4.0
MIN_PERIOD_CELLS = 2
MATCH_RTOL = 1e-9
PRECONDITION_TOL = 1e-9


class ResolutionExhausted(RuntimeError):
    """The oscillation period at some depth fell below the grid resolution."""

    def __init__(self, depth, period, cell_size):
        super().__init__(
            f"resolution exhausted at split depth {depth}: period {period:.3g} "
            f"is below {MIN_PERIOD_CELLS} cells of size {cell_size:.3g}"
        )
        self.depth = depth
        self.period = period
        self.cell_size = cell_size


class RealizationError(ValueError):
    """Region gradient does not match the split or laminate being realized."""


@dataclass
class RealizationReport:
    region_volume: float
    atom_volumes: np.ndarray
    atom_weights: np.ndarray
    interface_volume: float
    tv_discrepancy: float
    levels: int
    truncated_depth: int | None = None
    periods: list = field(default_factory=list)

    @property
    def atom_fractions(self):
        return self.atom_volumes / self.region_volume


def region_cells(grid, region):
    """Sorted cell ids from a boolean mask, an id list or ``None`` (all cells)."""
    if region is None:
        return np.arange(grid.n_cells)
    region = np.asarray(region)
    if region.dtype == bool:
        if region.shape != (grid.n_cells,):
            raise RealizationError("region mask does not match the grid")
        return np.flatnonzero(region)
    return np.unique(region.astype(np.int64))


def region_vertices(grid, cells):
    """``(interior, fixed)`` vertex ids of a cell set.

    A vertex is interior when every cell around it belongs to the set and it
    is not on the box boundary; only interior vertices are ever moved.
    """
    if np.asarray(cells).dtype == bool:
        cells = np.flatnonzero(cells)
    verts, counts = np.unique(grid.cells[cells].ravel(), return_counts=True)
    inner = (counts == grid.vertex_degree[verts]) & ~grid.boundary[verts]
    return verts[inner], verts[~inner]


def _lattice_unit(grid, nvec):
    # spacing of lattice hyperplanes orthogonal to nvec when nvec is lattice-aligned
    return float(np.min(grid.h) * np.max(np.abs(nvec)))


def _snap_period(grid, nvec, period):
    unit = _lattice_unit(grid, nvec)
    return 2.0 * unit * max(1, round(period / (2.0 * unit)))


def _triangle(t, period):
    # slopes +1/2 then -1/2, zero at multiples of the period
    s = np.mod(t, period)
    return 0.5 * np.minimum(s, period - s)


def _cap(grid, interior, fixed, slope):
    if slope is None or np.isinf(slope):
        return np.inf
    dist, _ = cKDTree(grid.vertices[fixed]).query(grid.vertices[interior])
    return 0.5 * slope * dist


def _apply_waves(grid, values, cells, waves, period, cutoff_slope):
    """Add ``sum amp * psi(x . n - t0)`` over ``waves = [(amp_vec, nvec)]``."""
    interior, fixed = region_vertices(grid, cells)
    if interior.size == 0 or fixed.size == 0:
        return 0
    x = grid.vertices[interior]
    cap = _cap(grid, interior, fixed, cutoff_slope)
    xf = grid.vertices[fixed]
    for amp, nvec in waves:
        t0 = float(np.min(xf @ nvec))
        psi = np.minimum(_triangle(x @ nvec - t0, period), cap)
        values[interior] += psi[:, None] * amp[None, :]
    return interior.size


def _split_waves(step):
    # displacement 2 m a psi realizes gradient jumps +- m a (x) n
    count = 2 if step.case_tag == CASE_I else 1
    return [(2.0 * step.magnitude * a, n) for a, n in step.directions[:count]]


def _classify(grads, matrices, scale):
    diff = grads[:, None, :, :] - matrices[None, :, :, :]
    err = np.sqrt(np.einsum("cmij,cmij->cm", diff, diff))
    best = np.argmin(err, axis=1)
    ok = err[np.arange(len(best)), best] <= MATCH_RTOL * scale
    return np.where(ok, best, -1)


def _check_region(grid, values, cells, parent):
    grads = grid.gradients(values, cells)
    err = np.max(np.abs(grads - parent)) if grads.size else 0.0
    if err > PRECONDITION_TOL * (1.0 + np.max(np.abs(parent))):
        raise RealizationError(f"region gradient differs from the split parent by {err:.3e}")


def _extent(grid, cells, nvec):
    t = grid.vertices[np.unique(grid.cells[cells].ravel())] @ nvec
    return float(t.max() - t.min())


def _period_for(grid, cells, waves, N):
    return min(_extent(grid, cells, n) for _, n in waves) / N


def realize_split(u, region, step, N=DEFAULT_N, *, period=None, cutoff_slope=DEFAULT_CUTOFF_SLOPE):
    """Realize one split on ``region`` (cell mask or ids); returns a new map.

    ``N`` oscillations fit across the region unless ``period`` is given.
    """
    grid = u.grid
    cells = region_cells(grid, region)
    _check_region(grid, u.values, cells, step.parent)
    out = u.copy()
    if step.magnitude == 0.0:
        return out
    if N < 2 and period is None:
        raise ValueError("need N >= 2 oscillations")
    waves = _split_waves(step)
    T = _period_for(grid, cells, waves, N) if period is None else period
    unit = min(_lattice_unit(grid, n) for _, n in waves)
    if T < MIN_PERIOD_CELLS * unit:
        raise ResolutionExhausted(step.level, T, unit)
    T = max(_snap_period(grid, n, T) for _, n in waves)
    _apply_waves(grid, out.values, cells, waves, T, cutoff_slope)
    return out


def realize_rank_one(u, region, a, nvec, weight=0.5, N=DEFAULT_N, *, cutoff_slope=DEFAULT_CUTOFF_SLOPE):
    """Two-gradient oscillation ``A + (1 - weight) a (x) n`` / ``A - weight a (x) n``.

    ``nvec`` may have any length; it is normalized and its norm moved into ``a``.
    """
    grid = u.grid
    cells = region_cells(grid, region)
    nvec = np.asarray(nvec, dtype=float)
    norm = float(np.linalg.norm(nvec))
    a = np.asarray(a, dtype=float) * norm
    nvec = nvec / norm
    lam = float(weight)
    if not 0.0 < lam < 1.0:
        raise ValueError("weight must lie in (0, 1)")
    out = u.copy()
    T = _extent(grid, cells, nvec) / N
    unit = _lattice_unit(grid, nvec)
    if T < MIN_PERIOD_CELLS * unit:
        raise ResolutionExhausted(0, T, unit)
    T = _snap_period(grid, nvec, T)
    interior, fixed = region_vertices(grid, cells)
    if interior.size == 0:
        return out
    x = grid.vertices[interior]
    t0 = float(np.min(grid.vertices[fixed] @ nvec))
    s = np.mod(x @ nvec - t0, T)
    rise = lam * T
    psi = np.where(s <= rise, (1.0 - lam) * s, (1.0 - lam) * rise - lam * (s - rise))
    cap = _cap(grid, interior, fixed, cutoff_slope)
    psi = np.minimum(psi, 2.0 * max(lam, 1.0 - lam) * cap)
    out.values[interior] += psi[:, None] * a[None, :]
    return out


def realize_tree(
    grid,
    values,
    cells,
    nu,
    N=DEFAULT_N,
    freq_ratio=DEFAULT_FREQ_RATIO,
    *,
    cutoff_slope=DEFAULT_CUTOFF_SLOPE,
    truncate=False,
    max_levels=None,
    accept=None,
):
    """In-place core of :func:`realize_laminate` on a vertex value array.

    ``accept(cells, before)``, if given, is called after each split with the
    split's cells and their gradients before it; returning ``False`` undoes
    that split (and prunes its subtree).

    Returns ``(levels, truncated_depth, periods)``.
    """
    if nu.is_dirac:
        return 0, None, []
    periods = []
    truncated = None
    levels = 0
    T0 = _period_for(grid, cells, _split_waves(nu.tree[0]), N)
    queue = [(0, cells, T0, 0)]
    while queue:
        idx, sub, T, depth = queue.pop(0)
        step = nu.tree[idx]
        if step.magnitude == 0.0:
            continue
        if max_levels is not None and depth >= max_levels:
            truncated = depth if truncated is None else min(truncated, depth)
            continue
        waves = _split_waves(step)
        unit = min(_lattice_unit(grid, n) for _, n in waves)
        if T < MIN_PERIOD_CELLS * unit:
            if not truncate:
                raise ResolutionExhausted(depth, T, unit)
            truncated = depth if truncated is None else min(truncated, depth)
            continue
        Ts = max(_snap_period(grid, n, T) for _, n in waves)
        if accept is not None:
            interior, _ = region_vertices(grid, sub)
            saved = values[interior].copy()
            before = grid.gradients(values, sub)
        if _apply_waves(grid, values, sub, waves, Ts, cutoff_slope) == 0:
            continue
        if accept is not None and not accept(sub, before):
            values[interior] = saved
            continue
        periods.append((depth, Ts))
        levels = max(levels, depth + 1)
        kids = np.array([c.matrix for c in step.children])
        scale = 1.0 + float(np.max(np.abs(kids)))
        which = _classify(grid.gradients(values, sub), kids, scale)
        for slot, child in enumerate(step.children):
            if child.next is None:
                continue
            part = sub[which == slot]
            if part.size:
                queue.append((child.next, part, Ts / freq_ratio, depth + 1))
    return levels, truncated, periods


def realize_laminate(
    u,
    region,
    nu,
    N=DEFAULT_N,
    freq_ratio=DEFAULT_FREQ_RATIO,
    *,
    cutoff_slope=DEFAULT_CUTOFF_SLOPE,
    truncate=False,
    max_levels=None,
):
    """Realize the split tree of ``nu`` level by level on ``region``.

    Returns ``(new_map, RealizationReport)``.  With ``truncate`` the levels
    whose period would drop below the grid resolution are skipped (their
    cells keep the intermediate gradient) instead of raising
    :class:`ResolutionExhausted`.
    """
    grid = u.grid
    cells = region_cells(grid, region)
    _check_region(grid, u.values, cells, nu.root)
    out = u.copy()
    levels, truncated, periods = realize_tree(
        grid,
        out.values,
        cells,
        nu,
        N,
        freq_ratio,
        cutoff_slope=cutoff_slope,
        truncate=truncate,
        max_levels=max_levels,
    )
    return out, _report(out, cells, nu, levels, truncated, periods)


def _report(u, cells, nu, levels, truncated, periods):
    vol = u.grid.cell_volume
    atoms = nu.matrices()
    region_volume = vol * cells.size
    which = _classify(u.gradients(cells), atoms, 1.0 + float(np.max(np.abs(atoms))))
    counts = np.bincount(which[which >= 0], minlength=len(atoms))
    # several atoms may share a matrix; _classify credits the first of them
    volumes, weights = _merge_duplicates(atoms, vol * counts.astype(float), nu.weights())
    interface = region_volume - float(volumes.sum())
    frac = volumes / region_volume
    tv = 0.5 * (float(np.abs(frac - weights).sum()) + interface / region_volume)
    return RealizationReport(
        region_volume=region_volume,
        atom_volumes=volumes,
        atom_weights=weights,
        interface_volume=interface,
        tv_discrepancy=tv,
        levels=levels,
        truncated_depth=truncated,
        periods=periods,
    )


def _merge_duplicates(atoms, volumes, weights):
    keys = {}
    merged_v = []
    merged_w = []
    for m, v, w in zip(atoms, volumes, weights):
        key = tuple(np.round(m.ravel(), 9))
        if key in keys:
            merged_v[keys[key]] += v
            merged_w[keys[key]] += w
            continue
        keys[key] = len(merged_v)
        merged_v.append(v)
        merged_w.append(w)
    return np.array(merged_v), np.array(merged_w)
