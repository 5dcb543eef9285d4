"""JSON and CSV export of laminates, maps and diagnostics.

Floats are written with ``repr`` so that identical inputs give identical
bytes.
"""

import csv
import hashlib
import io as _io
import json
from fractions import Fraction

import numpy as np

from lamforge.grid import PiecewiseAffineMap, SimplicialGrid
from lamforge.laminate import Atom, Child, DiscreteLaminate, SplitStep


def config_hash(config):
    """Short stable hash of a JSON-serializable mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _dyadic(w):
    w = Fraction(w)
    den = w.denominator
    log2 = den.bit_length() - 1
    if den != 1 << log2:
        raise ValueError(f"weight {w} is not dyadic")
    return w.numerator, log2


def _matrix(m):
    return [[float(x) for x in row] for row in np.asarray(m)]


def laminate_to_dict(nu):
    atoms = []
    for a in nu.atoms:
        num, log2 = _dyadic(a.weight)
        atoms.append({"w_num": num, "w_log2_den": log2, "matrix": _matrix(a.matrix), "role": a.role})
    tree = []
    for s in nu.tree:
        kids = []
        for c in s.children:
            num, log2 = _dyadic(c.weight)
            kids.append(
                {
                    "w_num": num,
                    "w_log2_den": log2,
                    "matrix": _matrix(c.matrix),
                    "role": c.role,
                    "signs": list(c.signs),
                    "next": c.next,
                }
            )
        tree.append(
            {
                "parent": _matrix(s.parent),
                "case": s.case_tag,
                "magnitude": float(s.magnitude),
                "level": s.level,
                "directions": [[list(map(float, a)), list(map(float, n))] for a, n in s.directions],
                "children": kids,
            }
        )
    return {
        "dim": nu.dim,
        "root": _matrix(nu.root),
        "rate": float(nu.rate),
        "depth": nu.case_one_depth,
        "atoms": atoms,
        "tree": tree,
    }


def laminate_from_dict(doc):
    def weight(e):
        return Fraction(e["w_num"], 1 << e["w_log2_den"])

    atoms = [Atom(weight(e), np.array(e["matrix"], dtype=float), e["role"]) for e in doc["atoms"]]
    tree = []
    for s in doc.get("tree", []):
        kids = [
            Child(weight(c), np.array(c["matrix"], dtype=float), c["role"], tuple(c["signs"]), c["next"])
            for c in s["children"]
        ]
        dirs = [(np.array(a, dtype=float), np.array(n, dtype=float)) for a, n in s["directions"]]
        tree.append(
            SplitStep(np.array(s["parent"], dtype=float), s["case"], s["magnitude"], kids, dirs, s["level"])
        )
    return DiscreteLaminate(np.array(doc["root"], dtype=float), doc["rate"], doc["depth"], atoms, tree)


def map_to_dict(u):
    return {
        "dim": u.grid.dim,
        "n": u.grid.n,
        "box": u.grid.box.tolist(),
        "values": u.values.tolist(),
    }


def map_from_dict(doc):
    grid = SimplicialGrid(doc["dim"], doc["n"], doc["box"])
    return PiecewiseAffineMap(grid, np.array(doc["values"], dtype=float))


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(fields, rows, chash=None):
    """CSV with a trailing ``config_hash`` column when ``chash`` is given."""
    buf = _io.StringIO()
    cols = list(fields) + (["config_hash"] if chash is not None else [])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        vals = [_fmt(row[f]) for f in fields]
        if chash is not None:
            vals.append(chash)
        writer.writerow(vals)
    return buf.getvalue()


def write_csv(path, fields, rows, chash=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(fields, rows, chash))


def gradient_rows(u):
    """Rows ``cell_id, a11 .. add, det, volume`` of the gradient field."""
    grads = u.gradients()
    dets = np.linalg.det(grads)
    d = u.grid.dim
    names = [f"a{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    fields = ["cell_id"] + names + ["det", "volume"]
    vol = u.grid.cell_volume
    rows = []
    for c, (g, det) in enumerate(zip(grads.reshape(len(grads), -1), dets)):
        row = {"cell_id": c, "det": float(det), "volume": vol}
        row.update({name: float(x) for name, x in zip(names, g)})
        rows.append(row)
    return fields, rows


DECAY_FIELDS = ("iteration", "residual", "decay_ratio", "increment_lp", "violation_volume")


def decay_rows(diag):
    return [
        {
            "iteration": r.iteration,
            "residual": r.residual,
            "decay_ratio": r.decay_ratio,
            "increment_lp": r.increment_lp,
            "violation_volume": r.violation_volume,
        }
        for r in diag.records
    ]
