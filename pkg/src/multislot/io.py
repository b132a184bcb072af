"""Reading and writing the JSON and CSV file formats."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dual import DualSolution
from .interaction import EllipsoidConstraint, InteractionBlock
from .linearizer import QcqpInstance
from .problem import RankingProblem, build_problem
from .recovery import ServingPlan

__all__ = [
    "read_json",
    "write_json",
    "load_problem",
    "save_problem",
    "load_dual",
    "save_dual",
    "write_plan",
    "read_plan",
    "load_interaction",
    "load_ellipsoid",
    "load_qcqp",
    "write_points",
    "read_points",
]


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, data) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def load_problem(path) -> RankingProblem:
    return build_problem(read_json(path))


def save_problem(problem: RankingProblem, path) -> None:
    write_json(path, problem.to_dict())


def save_dual(sol: DualSolution, path) -> None:
    write_json(path, sol.to_dict())


def load_dual(path) -> DualSolution:
    """Rebuild a :class:`DualSolution` from the file written by :func:`save_dual`."""
    d = read_json(path)
    y = np.concatenate([[d["mu0"], d["mu1"]], np.asarray(d.get("eta", []), dtype=float)])
    return DualSolution(y, int(d.get("iterations", 0)), float(d.get("primal_residual", 0.0)),
                        float(d.get("dual_residual", 0.0)), float(d.get("complementarity", 0.0)),
                        float(d.get("objective", np.nan)), bool(d.get("converged", False)),
                        float(d.get("wall_time", 0.0)), str(d.get("method", "pg")))


def write_plan(plan: ServingPlan, path) -> None:
    """``user,slot,item`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "slot", "item"])
        w.writerows(plan.rows())


def read_plan(path) -> ServingPlan:
    with open(path, newline="") as fh:
        rows = [(int(r["user"]), int(r["slot"]), int(r["item"])) for r in csv.DictReader(fh)]
    if not rows:
        return ServingPlan(np.zeros((0, 0), dtype=int))
    n = max(r[0] for r in rows) + 1
    K = max(r[1] for r in rows) + 1
    items = np.full((n, K), -1, dtype=int)
    for i, k, j in rows:
        items[i, k] = j
    return ServingPlan(items)


def load_interaction(path) -> dict:
    """Interaction file: one block ``{J, K, p_tilde, offdiag}`` shared by all
    users, or ``{"blocks": [...], "blocks_r": [...], "epsilon": ...}``.

    Returns a dict with ``blocks`` (list of :class:`InteractionBlock`),
    ``blocks_r`` (list or ``None``) and ``epsilon`` (``None`` if unset).
    """
    d = read_json(path)
    if "blocks" in d:
        blocks = [InteractionBlock.from_dict(b) for b in d["blocks"]]
    else:
        blocks = [InteractionBlock.from_dict(d)]
    blocks_r = None
    if d.get("blocks_r") is not None:
        blocks_r = [InteractionBlock.from_dict(b) for b in d["blocks_r"]]
    return {"blocks": blocks, "blocks_r": blocks_r, "epsilon": d.get("epsilon")}


def load_ellipsoid(path) -> EllipsoidConstraint:
    """``{B | B_diag, center, radius_sq}``."""
    return EllipsoidConstraint.from_dict(read_json(path))


def load_qcqp(path) -> QcqpInstance:
    """``{A | A_diag, a, ellipsoid, [C, c], [Ceq, ceq]}``."""
    return QcqpInstance.from_dict(read_json(path))


def write_points(points, path) -> None:
    """One point per row, full precision, no header."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in pts:
            w.writerow([repr(float(v)) for v in row])


def read_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path} holds no points")
    return np.asarray(rows, dtype=float)
