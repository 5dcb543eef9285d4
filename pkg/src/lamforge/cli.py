"""``lamforge`` command line: laminates, solves and the experiment tables.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from lamforge import io
from lamforge.checks import LaminateDiagnostics, diagnose
from lamforge.constraints import ConstraintError, ConstraintSpec
from lamforge.experiments import (
    ConfigError,
    RunConfig,
    run_approximation,
    run_gap,
    run_lsc,
    run_solve,
)
from lamforge.grid import GridError
from lamforge.kernels import SVDConvergenceError
from lamforge.laminate import LaminateError, build_laminate
from lamforge.realize import RealizationError, ResolutionExhausted

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
SUBCOMMANDS = ("laminate", "solve", "approx", "lsc", "gap", "decay")
SEED_ENV = "LAMFORGE_SEED"

_DEFAULTS = {
    "laminate": {"dim": 3, "rate": 3.0, "depth": 8, "p": 2.0},
    "solve": {"iters": 6},
    "decay": {"iters": 5, "rate": 2.0},
    "approx": {"rate": 2.0, "iters": 3},
    "lsc": {"iters": 4},
    "gap": {"rate": 2.0},
}


def _common(p):
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--J", dest="rate", type=float, help="alias of --rate")
    p.add_argument("--J1", type=float)
    p.add_argument("--J2", type=float)
    p.add_argument("--J-file", dest="J_file")
    p.add_argument("--g")
    p.add_argument("--depth", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--freq-ratio", dest="freq_ratio", type=int)
    p.add_argument("--k0", type=int)
    p.add_argument("--cutoff-slope", dest="cutoff_slope", type=float)
    p.add_argument("--case-rule", dest="case_rule", choices=["threshold", "case-one"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(prog="lamforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        _common(p)
        if name == "laminate":
            p.add_argument("--root", default=None, help="id, random or affine:<entries>")
        if name == "approx":
            p.add_argument("--levels", type=int)
        if name == "lsc":
            p.add_argument("--eps", type=lambda s: [float(x) for x in s.split(",")])
        if name == "solve":
            p.add_argument("--gradients", action="store_true", help="also write gradients.csv")
    return parser


def make_config(args):
    """Merge defaults, the ``--config`` file, flags and ``LAMFORGE_SEED``."""
    values = dict(_DEFAULTS.get(args.subcommand, {}))
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        loaded.pop("subcommand", None)
        values.update(loaded)
    for key, val in vars(args).items():
        if key in ("config", "subcommand", "root", "gradients") or val is None:
            continue
        values[key] = val
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    if "cutoff_slope" in values and values["cutoff_slope"] == "inf":
        values["cutoff_slope"] = math.inf
    try:
        cfg = RunConfig(subcommand=args.subcommand, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _root_matrix(selector, dim, seed):
    if selector in (None, "id"):
        return np.eye(dim)
    if selector == "random":
        return np.random.default_rng(seed).uniform(-2.0, 2.0, size=(dim, dim))
    if selector.startswith("affine:"):
        vals = [float(x) for x in selector[len("affine:"):].split(",")]
        if len(vals) != dim * dim:
            raise ConfigError(f"root needs {dim * dim} entries")
        return np.array(vals).reshape(dim, dim)
    raise ConfigError(f"unknown root selector {selector!r}")


def _plot_script(title, columns, xcol):
    lines = [
        "# gnuplot script; run: gnuplot plot.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set output 'plot.png'",
        f"set title '{title}'",
        "set key autotitle columnhead",
        "set logscale y",
        "plot " + ", ".join(f"'diagnostics.csv' using {xcol}:{c} with linespoints" for c in columns),
    ]
    return "\n".join(lines) + "\n"


def _write(out, name, text):
    with open(os.path.join(out, name), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _report(out, chash, cfg, body):
    doc = {"config": _json_safe(cfg.to_dict()), "config_hash": chash, **_json_safe(body)}
    io.dump_json(doc, os.path.join(out, "report.json"))


def _cmd_laminate(cfg, args, out, chash):
    M = _root_matrix(args.root, cfg.dim, cfg.seed)
    rate = cfg.rate if cfg.rate is not None else 3.0
    nu = build_laminate(M, rate, cfg.depth, case_rule=cfg.case_rule)
    spec = ConstraintSpec.exact(rate, cfg.p, cfg.dim) if 1.0 < cfg.p < cfg.dim else None
    diag = diagnose(nu, cfg.p, spec)
    io.dump_json(io.laminate_to_dict(nu), os.path.join(out, "laminate.json"))
    io.write_csv(
        os.path.join(out, "diagnostics.csv"), LaminateDiagnostics.CSV_FIELDS, [diag.row()], chash
    )
    _write(out, "plot.gp", _plot_script("laminate diagnostics", [6, 7], 4))
    _report(out, chash, cfg, {"atoms": len(nu.atoms), "bad_mass": str(nu.bad_mass()), **diag.row()})


def _cmd_solve(cfg, args, out, chash):
    u, diag, rep = run_solve(cfg)
    io.dump_json(io.map_to_dict(u), os.path.join(out, "map.json"))
    io.write_csv(os.path.join(out, "diagnostics.csv"), io.DECAY_FIELDS, io.decay_rows(diag), chash)
    if getattr(args, "gradients", False):
        fields, rows = io.gradient_rows(u)
        io.write_csv(os.path.join(out, "gradients.csv"), fields, rows, chash)
    _write(out, "plot.gp", _plot_script("residual decay", [2, 4], 1))
    _report(out, chash, cfg, rep)


def _cmd_approx(cfg, args, out, chash):
    rows, summary = run_approximation(cfg)
    fields = ("level", "n", "distance_lp", "grad_lp", "violation_volume", "on_target_fraction", "residual")
    io.write_csv(os.path.join(out, "diagnostics.csv"), fields, rows, chash)
    _write(out, "plot.gp", _plot_script("approximation sequence", [3, 4], 2))
    _report(out, chash, cfg, {"rows": rows, **summary})


def _cmd_lsc(cfg, args, out, chash):
    rows, summary = run_lsc(cfg)
    fields = ("eps", "f_boundary", "realized_energy", "excluded_volume", "grad_lp_power", "residual")
    io.write_csv(os.path.join(out, "diagnostics.csv"), fields, rows, chash)
    _write(out, "plot.gp", _plot_script("boundary energy vs realized energy", [2, 3], 1))
    _report(out, chash, cfg, {"rows": rows, **summary})


def _cmd_gap(cfg, args, out, chash):
    rep = run_gap(cfg)
    fields = tuple(rep)
    io.write_csv(os.path.join(out, "diagnostics.csv"), fields, [rep], chash)
    _write(out, "plot.gp", _plot_script("determinant integrals", [2, 3], 1))
    _report(out, chash, cfg, rep)


_COMMANDS = {
    "laminate": _cmd_laminate,
    "solve": _cmd_solve,
    "decay": _cmd_solve,
    "approx": _cmd_approx,
    "lsc": _cmd_lsc,
    "gap": _cmd_gap,
}

_CONFIG_ERRORS = (ConfigError, ConstraintError, GridError)
_RUNTIME_ERRORS = (
    ResolutionExhausted,
    RealizationError,
    SVDConvergenceError,
    LaminateError,
    OSError,
    FloatingPointError,
)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags and 0 for --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        cfg = make_config(args)
        out = cfg.out
        os.makedirs(out, exist_ok=True)
    except _CONFIG_ERRORS as exc:
        print(f"lamforge: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"lamforge: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    chash = io.config_hash(cfg.to_dict())
    try:
        _COMMANDS[cfg.subcommand](cfg, args, out, chash)
    except _CONFIG_ERRORS as exc:
        print(f"lamforge: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _RUNTIME_ERRORS as exc:
        print(f"lamforge: {cfg.subcommand} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"lamforge: wrote {cfg.subcommand} outputs to {out} (config {chash})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
