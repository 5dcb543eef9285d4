"""Experiment drivers: solve, approximation sequence, energy bound, determinant gap."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from lamforge.constraints import ConstraintError, ConstraintSpec
from lamforge.grid import GridError, PiecewiseAffineMap, gradient_stats, kuhn_grid
from lamforge.integrate import (
    DEFAULT_K0,
    DEFAULT_N0,
    RefineOptions,
    convex_integrate,
    initial_extension,
    solve_report,
    violating_cells,
)
from lamforge.laminate import MAX_DEPTH
from lamforge.realize import DEFAULT_CUTOFF_SLOPE, DEFAULT_FREQ_RATIO

RECIPROCAL = "reciprocal"
NO_KAPPA = "none"
DEFAULT_EPS = (0.5, 0.1, 0.02)


class ConfigError(ValueError):
    """A run configuration violates a precondition."""


@dataclass(frozen=True)
class EnergyDensity:
    """``f(A) = |A|_F ** p + kappa(det A)`` with ``kappa(s) = 1/s`` for ``s > 0``."""

    p: float
    dim: int
    kappa: str = RECIPROCAL
    coercivity: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.p < self.dim:
            raise ConstraintError(f"energy exponent p={self.p} must satisfy 1 < p < d={self.dim}")
        if self.kappa not in (RECIPROCAL, NO_KAPPA):
            raise ConfigError(f"unknown kappa selector {self.kappa!r}")

    def kappa_of(self, s):
        s = np.asarray(s, dtype=float)
        if self.kappa == NO_KAPPA:
            return np.zeros_like(s)
        with np.errstate(divide="ignore"):
            return np.where(s > 0.0, 1.0 / np.where(s > 0.0, s, 1.0), np.inf)

    def __call__(self, A):
        A = np.asarray(A, dtype=float)
        norm = np.sqrt(np.einsum("...ij,...ij->...", A, A))
        return norm**self.p + self.kappa_of(np.linalg.det(A))

    def growth_ratio(self, s=1e6):
        """``kappa(s) / s ** (p / d)`` at a large ``s``; finite means the growth bound holds."""
        return float(self.kappa_of(s)) / s ** (self.p / self.dim)


def parse_boundary(selector, dim):
    """Boundary map from ``id``, ``2x``, ``affine:<entries>`` or ``file:<path>``.

    Returns ``(callable_or_array, matrix_or_None)``.
    """
    if selector == "id":
        A = np.eye(dim)
    elif selector == "2x":
        A = 2.0 * np.eye(dim)
    elif selector.startswith("affine:"):
        try:
            entries = [float(x) for x in selector[len("affine:"):].split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad affine boundary entries: {exc}") from exc
        if len(entries) != dim * dim:
            raise ConfigError(f"affine boundary needs {dim * dim} entries, got {len(entries)}")
        A = np.array(entries).reshape(dim, dim)
    elif selector.startswith("file:"):
        path = selector[len("file:"):]
        try:
            vals = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ConfigError(f"cannot read boundary file: {exc}") from exc
        return vals, None
    else:
        raise ConfigError(f"unknown boundary selector {selector!r}")
    return (lambda x, A=A: x @ A.T), A


@dataclass
class RunConfig:
    subcommand: str
    dim: int = 2
    n: int = 64
    p: float = 1.5
    rate: float | None = None
    J1: float | None = None
    J2: float | None = None
    J_file: str | None = None
    g: str = "id"
    iters: int = 6
    depth: int = 8
    N: int = DEFAULT_N0
    freq_ratio: int = DEFAULT_FREQ_RATIO
    k0: int = DEFAULT_K0
    cutoff_slope: float = DEFAULT_CUTOFF_SLOPE
    seed: int = 0
    levels: int = 3
    eps: list = field(default_factory=lambda: list(DEFAULT_EPS))
    case_rule: str = "threshold"
    out: str = "."

    def to_dict(self):
        d = asdict(self)
        d.pop("out")
        if math.isinf(d["cutoff_slope"]):
            d["cutoff_slope"] = "inf"
        return d

    def validate(self):
        if not 1.0 < self.p < self.dim:
            raise ConfigError(
                f"p={self.p} must satisfy 1 < p < d={self.dim}: "
                "p < d is necessary for the constraint to be relaxable"
            )
        if self.J1 is not None and self.J2 is not None and self.J1 > self.J2:
            raise ConfigError("J1 must not exceed J2")
        if self.subcommand == "laminate":
            if not 2 <= self.dim <= 8:
                raise ConfigError(f"dimension {self.dim} outside [2, 8]")
            if not 0 <= self.depth <= MAX_DEPTH:
                raise ConfigError(f"depth must lie in [0, {MAX_DEPTH}]")
            return self
        if self.dim not in (2, 3):
            raise ConfigError("grids are limited to d in {2, 3}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.iters < 1:
            raise ConfigError("iters must be >= 1")
        if not 0 <= self.k0 <= MAX_DEPTH - self.iters:
            raise ConfigError("laminate depth schedule exceeds the depth cap")
        if self.N < 2 or self.freq_ratio < 2:
            raise ConfigError("N and freq-ratio must be >= 2")
        if self.cutoff_slope <= 0:
            raise ConfigError("cutoff slope must be positive")
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if any(not 0.0 < e <= 1.0 for e in self.eps):
            raise ConfigError("every eps must lie in (0, 1]")
        parse_boundary(self.g, self.dim)
        return self

    def options(self):
        return RefineOptions(
            freq_ratio=self.freq_ratio,
            cutoff_slope=self.cutoff_slope,
            case_rule=self.case_rule,
        )

    def constraint(self, grid=None, default_rate=1.0):
        if self.J_file is not None:
            try:
                table = np.loadtxt(self.J_file, delimiter=",", ndmin=1).ravel()
            except OSError as exc:
                raise ConfigError(f"cannot read J file: {exc}") from exc
            if grid is not None and table.size != grid.n_cells:
                raise ConfigError(f"J file has {table.size} values, grid has {grid.n_cells} cells")
            return ConstraintSpec.exact(table, self.p, self.dim)
        if self.J1 is not None or self.J2 is not None:
            return ConstraintSpec.interval(self.J1, self.J2, self.p, self.dim)
        rate = default_rate if self.rate is None else self.rate
        return ConstraintSpec.exact(rate, self.p, self.dim)


def _integrate(config, grid, g, spec, L=None, N0=None):
    u0 = initial_extension(grid, g)
    u, diag = convex_integrate(
        u0,
        spec,
        config.iters if L is None else L,
        config.options(),
        k0=config.k0,
        N0=config.N if N0 is None else N0,
    )
    return u0, u, diag


def run_solve(config):
    """Prescribed-determinant solve; returns ``(map, diagnostics, report dict)``."""
    grid = kuhn_grid(config.dim, config.n)
    g, _ = parse_boundary(config.g, config.dim)
    spec = config.constraint(grid, default_rate=1.0)
    u0, u, diag = _integrate(config, grid, g, spec)
    rep = solve_report(u, u0, spec)
    report = {
        "initial_residual": diag.initial_residual,
        "final_residual": diag.residuals[-1] if diag.records else diag.initial_residual,
        "iterations": len(diag),
        "converged": diag.converged,
        "boundary_pinned": bool(np.array_equal(u.boundary_values(), u0.boundary_values())),
        "on_target_fraction": rep.on_target_fraction,
        "pointwise_det_integral": rep.pointwise_det_integral,
        "reference_det_integral": rep.reference_det_integral,
        "on_target_det_integral": rep.on_target_det_integral,
        "violation_volume": diag.records[-1].violation_volume if diag.records else 0.0,
        "lp_norm": rep.lp_norm,
    }
    return u, diag, report


def _lp_distance(u, target, p):
    # vertex quadrature with equal weights on the uniform lattice
    diff = u.values - target(u.grid.vertices)
    return float((u.grid.volume * np.mean(np.sum(diff * diff, axis=1) ** (p / 2))) ** (1.0 / p))


def run_approximation(config):
    """Maps ``u_j`` at resolution ``n * 2**(j-1)`` with frequency ``N * 2**(j-1)``.

    Returns a list of per-level rows and a summary dict.
    """
    g, _ = parse_boundary(config.g, config.dim)
    if not callable(g):
        raise ConfigError("the approximation target must be a closed-form map")
    rows = []
    for j in range(1, config.levels + 1):
        grid = kuhn_grid(config.dim, config.n * 2 ** (j - 1))
        spec = config.constraint(grid, default_rate=1.0)
        u0, u, diag = _integrate(config, grid, g, spec, N0=config.N * 2 ** (j - 1))
        rep = solve_report(u, u0, spec)
        rows.append(
            {
                "level": j,
                "n": grid.n,
                "distance_lp": _lp_distance(u, g, config.p),
                "grad_lp": rep.lp_norm,
                "violation_volume": float(
                    grid.cell_volume * np.count_nonzero(violating_cells(u, spec))
                ),
                "on_target_fraction": rep.on_target_fraction,
                "residual": diag.residuals[-1] if diag.records else diag.initial_residual,
            }
        )
    dist = [r["distance_lp"] for r in rows]
    grads = [r["grad_lp"] for r in rows]
    summary = {
        "distance_decreasing": all(b < a for a, b in zip(dist, dist[1:])) or max(dist) == 0.0,
        "grad_band": max(grads) / min(grads) if min(grads) > 0 else math.inf,
    }
    return rows, summary


def realized_energy(u, energy, spec):
    """Mean energy over admissible cells with positive determinant.

    Returns ``(mean_energy, excluded_volume, lp_power)`` where the excluded
    volume counts violating cells and cells with ``det <= 0``.
    """
    grads = u.gradients()
    dets = np.linalg.det(grads)
    viol = violating_cells(u, spec, dets)
    keep = (dets > 0.0) & ~viol
    vol = u.grid.cell_volume
    excluded = float(vol * np.count_nonzero(~keep))
    norms = np.sqrt(np.einsum("cij,cij->c", grads, grads))
    lp_power = float(vol * np.sum(norms**energy.p))
    if not keep.any():
        return math.inf, excluded, lp_power
    e = norms[keep] ** energy.p + energy.kappa_of(dets[keep])
    return float(np.mean(e)), excluded, lp_power


def run_lsc(config):
    """Energy of ``eps I`` against realized energies of ``det = 1`` solutions.

    Returns per-eps rows and a summary with the recorded common bound ``K``.
    """
    if config.dim not in (2, 3):
        raise ConfigError("the energy experiment needs d in {2, 3}")
    energy = EnergyDensity(config.p, config.dim)
    grid = kuhn_grid(config.dim, config.n)
    spec = ConstraintSpec.exact(1.0, config.p, config.dim)
    rows = []
    for eps in sorted(config.eps, reverse=True):
        A = eps * np.eye(config.dim)
        u0, u, diag = _integrate(config, grid, lambda x, A=A: x @ A.T, spec)
        mean, excluded, lp_power = realized_energy(u, energy, spec)
        rows.append(
            {
                "eps": eps,
                "f_boundary": float(energy(A)),
                "realized_energy": mean,
                "excluded_volume": excluded,
                "grad_lp_power": lp_power,
                "residual": diag.residuals[-1] if diag.records else diag.initial_residual,
            }
        )
    f_vals = [r["f_boundary"] for r in rows]
    bound = 1.0 + float(energy.kappa_of(1.0)) + max(r["grad_lp_power"] for r in rows)
    summary = {
        "K": energy.coercivity * bound,
        "f_increasing": all(b > a for a, b in zip(f_vals, f_vals[1:])),
        "energies_below_K": all(r["realized_energy"] <= energy.coercivity * bound for r in rows),
    }
    return rows, summary


def run_gap(config):
    """Pointwise determinant integral against the boundary-determined value."""
    if config.g != "id":
        raise ConfigError("the gap experiment uses the identity boundary map")
    rate = 2.0 if config.rate is None else config.rate
    cfg = RunConfig(**{**asdict(config), "rate": rate, "J1": None, "J2": None, "J_file": None})
    u, diag, rep = run_solve(cfg)
    return {
        "rate": rate,
        "pointwise_det_integral": rep["pointwise_det_integral"],
        "reference_det_integral": rep["reference_det_integral"],
        "gap": rep["pointwise_det_integral"] - rep["reference_det_integral"],
        "on_target_det_integral": rep["on_target_det_integral"],
        "on_target_fraction": rep["on_target_fraction"],
        "final_residual": rep["final_residual"],
    }


__all__ = [
    "ConfigError",
    "EnergyDensity",
    "GridError",
    "PiecewiseAffineMap",
    "RunConfig",
    "gradient_stats",
    "parse_boundary",
    "realized_energy",
    "run_approximation",
    "run_gap",
    "run_lsc",
    "run_solve",
]
