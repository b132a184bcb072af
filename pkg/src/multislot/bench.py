"""Random instance generators and the benchmark experiments.

Two experiments are provided:

* :func:`ignore_interaction_experiment` measures how much objective is
  lost when a QCQP with interaction effects is solved with their
  diagonal-only approximation.
* :func:`sampler_comparison` compares boundary-point samplers for the
  tangent-plane approximation against the exact solution.

:func:`run_suite` drives either from a config dict and writes CSV files.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_count, check_random_state
from .activeset import solve_qp as active_set_qp
from .interaction import EllipsoidConstraint, repair_pd, synthetic_block
from .linearizer import QcqpInstance, default_num_points, refine
from .oracle import MAX_ORACLE_DIM, exact_qcqp

__all__ = [
    "ExperimentResult",
    "random_qcqp",
    "interaction_instances",
    "ignore_interaction_experiment",
    "sampler_comparison",
    "summarize",
    "run_suite",
    "DEFAULT_TIMEOUT",
]

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0
SAMPLERS = ("net", "cube", "sphere")
RESULT_COLUMNS = ["experiment", "dim", "seed", "method", "status", "objective",
                  "reference_objective", "error", "n_points"]


@dataclass
class ExperimentResult:
    """One (instance, method) cell.

    ``error`` is the relative solution error for the sampler comparison
    and the relative objective loss for the interaction experiment.
    ``wall_time`` is kept out of the deterministic result file.
    """

    experiment: str
    dim: int
    seed: int
    method: str
    objective: float = math.nan
    reference_objective: float = math.nan
    error: float = math.nan
    n_points: int = 0
    status: str = "ok"
    wall_time: float = 0.0
    trace: list = field(default_factory=list, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in RESULT_COLUMNS}


def random_qcqp(dim: int, seed=None, *, theta: float = 0.3, delta: float = 0.8,
                diagonal: bool = False) -> QcqpInstance:
    """Random box-constrained QCQP with a nonempty feasible set.

    ``A`` and ``B`` are ``G'G / dim + I`` for Gaussian ``G``. The ellipsoid
    is centered at ``x0 ~ U[1, 2]^dim`` with radius term ``theta x0'B x0``,
    and the box has half-widths ``delta`` times the ellipsoid's extent
    along each axis, so the box center lies in both sets. The objective
    is ``x'Ax``, pulling the solution towards the origin and onto the
    ellipsoid boundary.
    """
    dim = check_count(dim, "dim")
    rng = check_random_state(seed)
    if diagonal:
        A = rng.uniform(1.0, 2.0, dim)
        B = rng.uniform(1.0, 2.0, dim)
        B_inv_diag = 1.0 / B
    else:
        G = rng.normal(size=(dim, dim))
        A = G.T @ G / dim + np.eye(dim)
        H = rng.normal(size=(dim, dim))
        B = H.T @ H / dim + np.eye(dim)
        B_inv_diag = np.diag(np.linalg.inv(B))
    x0 = rng.uniform(1.0, 2.0, dim)
    r = theta * float(x0 @ (B * x0 if diagonal else B @ x0))
    half = delta * np.sqrt(r * B_inv_diag)
    eye = np.eye(dim)
    C = np.vstack([eye, -eye])
    c = np.concatenate([x0 + half, -(x0 - half)])
    return QcqpInstance(A, np.zeros(dim), EllipsoidConstraint(B, x0, r), C=C, c=c)


def interaction_instances(n_items: int, seed=None, *, n_slots: int = 3, a_max: float = 0.1,
                          theta: float = 0.7, epsilon: float = 2.0, gamma: float = 1.0):
    """True and interaction-ignoring QCQPs for one simulated user.

    ``Q_p`` and ``Q_r`` are independent synthetic blocks (slot-decaying
    diagonals, cross coefficients uniform on ``[0, a_max]``) repaired to
    positive definiteness. The decision ``x`` lies in ``[0, 1]`` with one
    unit of mass per slot. The true problem minimizes
    ``x'(Q_p + gamma/2 I)x`` subject to ``x'Q_r x <= P``; the ignoring
    one keeps only the diagonals of ``Q_p`` and ``Q_r``.

    ``P`` interpolates with weight ``theta`` between the smallest level at
    which both constraints are feasible and the value of ``x'Q_r x`` at
    the objective's minimizer over the linear rows, so the true
    constraint binds for ``theta < 1``.

    Returns ``(truth, ignored)``.
    """
    rng = check_random_state(seed)
    J, K = check_count(n_items, "n_items"), check_count(n_slots, "n_slots")
    s = J * K
    Q_p = repair_pd(synthetic_block(J, K, rng, a_max=a_max).matrix(), epsilon)
    Q_r = repair_pd(synthetic_block(J, K, rng, a_max=a_max).matrix(), epsilon)
    eye = np.eye(s)
    C = np.vstack([eye, -eye])
    c = np.concatenate([np.ones(s), np.zeros(s)])
    Ceq = np.kron(np.ones(J), np.eye(K))
    ceq = np.ones(K)
    A = Q_p + 0.5 * gamma * eye
    zero = np.zeros(s)

    def lowest(H):
        return active_set_qp(2.0 * H, zero, C, c, Ceq, ceq)

    x_free = lowest(A).x
    v_hi = float(x_free @ Q_r @ x_free)
    D_r = np.diag(Q_r)
    v_lo = max(lowest(Q_r).objective, lowest(np.diag(D_r)).objective)
    P = v_lo + theta * (v_hi - v_lo)
    truth = QcqpInstance(A, zero, EllipsoidConstraint(Q_r, zero, P), C=C, c=c, Ceq=Ceq, ceq=ceq)
    ignored = QcqpInstance(np.diag(Q_p) + 0.5 * gamma, zero, EllipsoidConstraint(D_r, zero, P),
                           C=C, c=c, Ceq=Ceq, ceq=ceq)
    return truth, ignored


def ignore_interaction_experiment(dims, seeds, *, deadline: float | None = None,
                                  **instance_kw) -> list[ExperimentResult]:
    """Relative objective loss from ignoring interactions.

    For each item count ``n`` and seed, solves both problems of
    :func:`interaction_instances` exactly and reports
    ``(f(x_hat) - f(x*)) / f(x*)`` with ``f`` the true objective,
    ``x*`` the true solution and ``x_hat`` the interaction-ignoring one.
    """
    out = []
    for n in dims:
        for seed in seeds:
            res = ExperimentResult("interaction", int(n), int(seed), "ignore")
            if deadline is not None and time.perf_counter() > deadline:
                res.status = "timeout"
                out.append(res)
                continue
            start = time.perf_counter()
            truth, ignored = interaction_instances(n, seed, **instance_kw)
            cap = max(truth.dim, MAX_ORACLE_DIM)
            x_star = exact_qcqp(truth, max_dim=cap)
            x_hat = exact_qcqp(ignored, max_dim=cap)
            f_hat = truth.objective(x_hat.x)
            res.objective = f_hat
            res.reference_objective = x_star.objective
            res.error = (f_hat - x_star.objective) / x_star.objective
            res.wall_time = time.perf_counter() - start
            out.append(res)
    return out


def sampler_comparison(dims, seeds, *, samplers=SAMPLERS, n_points: int | None = None,
                       schedule=None, deadline: float | None = None,
                       oracle_cap: int = MAX_ORACLE_DIM, **instance_kw) -> list[ExperimentResult]:
    """Relative error ``||x(N) - x*|| / ||x*||`` per boundary-point sampler.

    Every sampler sees the same :func:`random_qcqp` instance. ``schedule``
    (default ``[N]``) gives nested point counts whose trace is attached to
    each result. Above ``oracle_cap`` dimensions only objectives and
    timings are recorded.
    """
    out = []
    for dim in dims:
        N = default_num_points(dim) if n_points is None else n_points
        sched = [N] if schedule is None else sorted(set(schedule) | {N})
        for seed in seeds:
            inst = random_qcqp(dim, seed, **instance_kw)
            oracle = None
            if dim <= oracle_cap and not (deadline is not None and time.perf_counter() > deadline):
                oracle = exact_qcqp(inst, max_dim=oracle_cap)
            for name in samplers:
                res = ExperimentResult("samplers", int(dim), int(seed), name, n_points=N)
                if deadline is not None and time.perf_counter() > deadline:
                    res.status = "timeout"
                    out.append(res)
                    continue
                start = time.perf_counter()
                rep = refine(inst, sched, sampler=name, seed=seed, reference=oracle)
                res.wall_time = time.perf_counter() - start
                res.objective = rep.objective
                res.trace = rep.trace
                if oracle is not None:
                    res.reference_objective = oracle.objective
                    res.error = rep.trace[-1]["relative_error"]
                out.append(res)
    return out


def summarize(results: list[ExperimentResult]) -> tuple[list[str], list[list]]:
    """Median error per dimension, one column per method."""
    methods = sorted({r.method for r in results})
    dims = sorted({r.dim for r in results})
    rows = []
    for d in dims:
        row = [d]
        for m in methods:
            errs = [r.error for r in results if r.dim == d and r.method == m and np.isfinite(r.error)]
            row.append(float(np.median(errs)) if errs else math.nan)
        rows.append(row)
    return ["dim"] + [f"median_error_{m}" for m in methods], rows


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _load_config(config) -> dict:
    if isinstance(config, (str, Path)):
        config = json.loads(Path(config).read_text())
    if not isinstance(config, dict):
        raise ValueError("config must be a dict or a path to a JSON file")
    cfg = dict(config)
    exp = cfg.get("experiment", "samplers")
    if exp not in ("samplers", "interaction"):
        raise ValueError(f"unknown experiment {exp!r}")
    cfg["experiment"] = exp
    dims = cfg.get("dims", [])
    if not isinstance(dims, list) or any(int(d) != d or d < 1 for d in dims):
        raise ValueError("dims must be a list of positive integers")
    cfg["dims"] = [int(d) for d in dims]
    seeds = cfg.get("seeds", 20)
    cfg["seeds"] = list(range(int(seeds))) if isinstance(seeds, int) else [int(s) for s in seeds]
    samplers = cfg.get("samplers", list(SAMPLERS))
    unknown = set(samplers) - set(SAMPLERS)
    if unknown:
        raise ValueError(f"unknown samplers {sorted(unknown)}")
    cfg["samplers"] = list(samplers)
    timeout = float(cfg.get("timeout", DEFAULT_TIMEOUT))
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    cfg["timeout"] = timeout
    return cfg


def run_suite(config, out_dir) -> dict:
    """Run an experiment from a config and write its result files.

    Config keys: ``experiment`` (``"samplers"`` or ``"interaction"``),
    ``dims``, ``seeds`` (count or list), ``samplers``, ``n_points``,
    ``schedule``, ``timeout`` in seconds (default 600) and ``params``
    passed to the instance generator.

    Writes ``results.csv`` (one sorted row per instance and method, no
    timings, so reruns are byte-identical), ``summary.csv`` (median error
    per dimension and method), ``timings.csv`` and one
    ``trace_<dim>_<seed>_<method>.csv`` per refinement trace. Cells not
    started before the timeout are recorded with status ``timeout``.
    Returns the paths written.
    """
    cfg = _load_config(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not out.is_dir():
        raise OSError(f"cannot write to {out}")
    deadline = time.perf_counter() + cfg["timeout"]
    params = cfg.get("params", {})
    if cfg["experiment"] == "samplers":
        results = sampler_comparison(cfg["dims"], cfg["seeds"], samplers=cfg["samplers"],
                                     n_points=cfg.get("n_points"), schedule=cfg.get("schedule"),
                                     deadline=deadline, **params)
    else:
        results = ignore_interaction_experiment(cfg["dims"], cfg["seeds"], deadline=deadline,
                                                **params)
    results.sort(key=lambda r: (r.experiment, r.dim, r.seed, r.method))
    paths = {"results": out / "results.csv", "summary": out / "summary.csv",
             "timings": out / "timings.csv"}
    _write_csv(paths["results"], RESULT_COLUMNS, [list(r.row().values()) for r in results])
    header, rows = summarize(results)
    if not results and cfg["experiment"] == "samplers":
        header = ["dim"] + [f"median_error_{m}" for m in sorted(cfg["samplers"])]
    _write_csv(paths["summary"], header, rows)
    _write_csv(paths["timings"], ["experiment", "dim", "seed", "method", "wall_time"],
               [[r.experiment, r.dim, r.seed, r.method, r.wall_time] for r in results])
    for r in results:
        if r.trace:
            p = out / f"trace_{r.dim}_{r.seed}_{r.method}.csv"
            _write_csv(p, ["N", "objective", "error"],
                       [[t["N"], t["objective"], t.get("error", math.nan)] for t in r.trace])
            paths[p.stem] = p
    logger.info("wrote %d result rows to %s", len(results), out)
    return paths
