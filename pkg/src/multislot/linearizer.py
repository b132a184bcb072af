"""Tangent-plane outer approximation of a single-ellipsoid QCQP.

The quadratic constraint ``(x - b)' B (x - b) <= r`` is replaced by the
supporting half-spaces ``(x - b)' B (x_j - b) <= r`` at boundary points
``x_j``. Every point of the ellipsoid satisfies all of them, so the
resulting QP is a relaxation and its optimum is a lower bound that
tightens as points are added.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator

from ._validation import InfeasibleError, check_count, check_pd, check_vector
from .activeset import solve_qp as active_set_qp
from .dual import DualOptions, DualProblem, solve_nonneg_qp
from .interaction import EllipsoidConstraint
from .lowdisc import PointSet, generate_boundary_points

__all__ = [
    "QcqpInstance",
    "CoverVerdict",
    "tangent_rows",
    "certify_cover",
    "LinearizedQp",
    "default_num_points",
    "linearize",
    "SolveReport",
    "solve_qp",
    "refine",
    "certificate_checks",
    "TangentPlaneQCQP",
    "check_feasible",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QcqpInstance:
    """``min (x - a)' A (x - a)`` subject to ``x`` in the ellipsoid and linear rows.

    Linear rows are ``C x <= c`` and ``Ceq x = ceq``. ``A`` may be a
    dense positive definite matrix or a 1-D positive diagonal.
    """

    A: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    ellipsoid: EllipsoidConstraint
    C: np.ndarray | None = field(default=None, repr=False)
    c: np.ndarray | None = field(default=None, repr=False)
    Ceq: np.ndarray | None = field(default=None, repr=False)
    ceq: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        A = check_pd(self.A, "A")
        s = A.shape[0]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", check_vector(self.a, "a", s))
        if self.ellipsoid.dim != s:
            raise ValueError(f"ellipsoid has dimension {self.ellipsoid.dim}, objective has {s}")
        for rows, rhs, name in (("C", "c", "C"), ("Ceq", "ceq", "Ceq")):
            M, v = getattr(self, rows), getattr(self, rhs)
            if (M is None) != (v is None):
                raise ValueError(f"{name} and its right-hand side must be given together")
            if M is None:
                M, v = np.zeros((0, s)), np.zeros(0)
            M = np.asarray(M, dtype=float).reshape(-1, s)
            v = check_vector(v, rhs, M.shape[0])
            object.__setattr__(self, rows, M)
            object.__setattr__(self, rhs, v)

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def has_linear_rows(self) -> bool:
        return self.C.shape[0] + self.Ceq.shape[0] > 0

    def apply_A(self, v: np.ndarray) -> np.ndarray:
        return self.A * v if self.A.ndim == 1 else self.A @ v

    def objective(self, x) -> float:
        z = np.asarray(x, dtype=float) - self.a
        return float(z @ self.apply_A(z))

    def linear_slack(self, x) -> float:
        """Largest violation of the linear rows (0 when all hold)."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self.C.shape[0]:
            viol = max(viol, float((self.C @ x - self.c).max()))
        if self.Ceq.shape[0]:
            viol = max(viol, float(np.abs(self.Ceq @ x - self.ceq).max()))
        return max(viol, 0.0)

    def in_U(self, x, tol: float = 1e-9) -> bool:
        return bool(self.ellipsoid.contains(x, tol)) and self.linear_slack(x) <= tol

    def qp_form(self):
        """Hessian and linear term of the objective as ``0.5 x'Hx + g'x``."""
        return 2.0 * self.A, -2.0 * self.apply_A(self.a)

    def to_dict(self) -> dict:
        out = {"A_diag" if self.A.ndim == 1 else "A": self.A.tolist(), "a": self.a.tolist(),
               "ellipsoid": self.ellipsoid.to_dict()}
        if self.C.shape[0]:
            out["C"], out["c"] = self.C.tolist(), self.c.tolist()
        if self.Ceq.shape[0]:
            out["Ceq"], out["ceq"] = self.Ceq.tolist(), self.ceq.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QcqpInstance":
        A = np.asarray(data["A_diag"] if "A_diag" in data else data["A"], dtype=float)
        return cls(A, np.asarray(data["a"], dtype=float),
                   EllipsoidConstraint.from_dict(data["ellipsoid"]),
                   C=data.get("C"), c=data.get("c"), Ceq=data.get("Ceq"), ceq=data.get("ceq"))


@dataclass(frozen=True, eq=False)
class CoverVerdict:
    bounded: bool
    rank: int
    reason: str


def tangent_rows(points: np.ndarray, E: EllipsoidConstraint):
    """Rows ``n_j = B (x_j - b)`` and right-hand sides ``r + n_j' b``."""
    normals = E.apply_B(np.asarray(points, dtype=float) - E.center)
    return normals, E.radius_sq + normals @ E.center


def certify_cover(points, E: EllipsoidConstraint) -> CoverVerdict:
    """Decide whether the tangent planes at ``points`` bound a polytope.

    The intersection of the half-spaces ``n_j' x <= h_j`` is bounded
    exactly when no nonzero direction ``d`` has ``n_j' d <= 0`` for all
    ``j``, i.e. when the normals positively span the space. That holds
    iff they have full rank and some combination with all weights at
    least one sums to zero; the second condition is an LP.
    """
    pts = points.points if isinstance(points, PointSet) else np.atleast_2d(np.asarray(points))
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    normals, _ = tangent_rows(pts, E)
    s = E.dim
    rank = int(np.linalg.matrix_rank(normals))
    if pts.shape[0] < s + 1:
        return CoverVerdict(False, rank, f"{pts.shape[0]} points cannot bound a cover in {s} dimensions")
    if rank < s:
        return CoverVerdict(False, rank, "tangent normals do not span the space")
    unit = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    res = linprog(np.zeros(pts.shape[0]), A_eq=unit.T, b_eq=np.zeros(s),
                  bounds=[(1.0, None)] * pts.shape[0], method="highs")
    if res.status == 0:
        return CoverVerdict(True, rank, "normals positively span the space")
    if res.status == 2:
        return CoverVerdict(False, rank, "normals lie in a closed half-space")
    raise RuntimeError(f"cover LP failed: {res.message}")


@dataclass(frozen=True, eq=False)
class LinearizedQp:
    """QP whose quadratic constraint is replaced by tangent half-spaces."""

    instance: QcqpInstance
    points: PointSet
    normals: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    bounded: bool | None = None

    @property
    def n_points(self) -> int:
        return self.rhs.shape[0]

    def tangency_residual(self) -> float:
        """Largest ``|n_j' x_j - h_j|`` relative to the radius term."""
        act = np.einsum("ij,ij->i", self.normals, self.points.points) - self.rhs
        return float(np.abs(act).max() / self.instance.ellipsoid.radius_sq)

    def contains(self, x, tol: float = 1e-9) -> np.ndarray:
        """Whether points (rows of ``x``) satisfy every tangent row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        scale = np.abs(self.rhs).max() + 1.0
        return np.all(x @ self.normals.T <= self.rhs + tol * scale, axis=1)


def default_num_points(dim: int) -> int:
    """``max(1024, 2**m)`` with ``m`` the smallest integer such that ``2**m >= 10 * dim``."""
    m = max(0, math.ceil(math.log2(10 * dim)))
    return max(1024, 2 ** m)


def linearize(inst: QcqpInstance, N: int | None = None, sampler: str = "net", *, seed=None,
              points: PointSet | np.ndarray | None = None, require_bounded_cover: bool = True,
              heights: str = "area", construction: str = "sobol") -> LinearizedQp:
    """Build the tangent-plane QP with ``N`` boundary points.

    ``points`` overrides the sampler. With ``require_bounded_cover`` the
    call fails unless ``N >= dim + 1`` and :func:`certify_cover` accepts
    the points; switch it off when the linear rows alone keep the
    problem bounded, or when the certificate is too expensive.
    """
    E = inst.ellipsoid
    s = inst.dim
    if points is None:
        N = default_num_points(s) if N is None else check_count(N, "N")
        pts = generate_boundary_points(E, N, sampler=sampler, seed=seed, heights=heights,
                                       construction=construction)
    elif isinstance(points, PointSet):
        pts = points
    else:
        pts = PointSet(np.atleast_2d(np.asarray(points, dtype=float)), "ellipsoid",
                       {"sampler": "given"})
    N = len(pts)
    bounded = None
    if require_bounded_cover:
        if N < s + 1:
            raise ValueError(f"N={N} < dim + 1 = {s + 1}: tangent planes cannot bound a cover")
        verdict = certify_cover(pts, E)
        if not verdict.bounded:
            raise ValueError(f"unbounded cover: {verdict.reason}")
        bounded = True
    normals, rhs = tangent_rows(pts.points, E)
    return LinearizedQp(inst, pts, normals, rhs, bounded)


@dataclass(eq=False)
class SolveReport:
    """Outcome of solving a linearized QP, with an optional refinement trace."""

    x: np.ndarray
    objective: float
    n_points: int
    violation: float
    in_S: bool
    kkt: dict
    iterations: int
    wall_time: float
    method: str
    sampler: str
    converged: bool = True
    trace: list = field(default_factory=list)
    polished_x: np.ndarray | None = None
    polished_objective: float | None = None

    @property
    def kkt_max(self) -> float:
        return max(self.kkt.values()) if self.kkt else 0.0

    def to_dict(self) -> dict:
        out = {
            "objective": self.objective,
            "n_points": self.n_points,
            "violation": self.violation,
            "in_S": self.in_S,
            "kkt": self.kkt,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "method": self.method,
            "sampler": self.sampler,
            "converged": self.converged,
            "trace": self.trace,
            "x": self.x.tolist(),
        }
        if self.polished_x is not None:
            out["polished_objective"] = self.polished_objective
            out["polished_x"] = self.polished_x.tolist()
        return out


def _kkt_report(H, g, G, h, x, u, Geq=None, heq=None, w=None) -> dict:
    Hx = H * x if H.ndim == 1 else H @ x
    grad = Hx + g + G.T @ u
    slack = G @ x - h
    feas = max(0.0, float(slack.max(initial=0.0)))
    if Geq is not None and Geq.shape[0]:
        grad = grad + Geq.T @ w
        feas = max(feas, float(np.abs(Geq @ x - heq).max()))
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal_feasibility": feas,
        "dual_feasibility": max(0.0, float(-u.min(initial=0.0))),
        "complementarity": float(np.abs(u * slack).max(initial=0.0)),
    }


def _dual_route(lin: LinearizedQp, H: np.ndarray, g: np.ndarray, G: np.ndarray, h: np.ndarray,
                tol: float, max_iter: int | None):
    """Solve ``min 0.5 x'Hx + g'x, Gx <= h`` for diagonal ``H`` through its dual.

    The dual is the nonnegative QP ``min 0.5 u'(G H^-1 G')u - u'(-h - G H^-1 g)``
    in the row multipliers; ``x = -H^-1 (g + G'u)`` recovers the primal.
    """
    Hinv_g = g / H

    def matvec(u):
        return G @ ((G.T @ u) / H)

    prob = DualProblem(matvec, -h - G @ Hinv_g, G.shape[0])
    sol = solve_nonneg_qp(prob, DualOptions(tol=tol, max_iter=max_iter))
    u = sol.y
    x = -(g + G.T @ u) / H
    return x, u, sol.iterations, sol.converged


def solve_qp(lin: LinearizedQp, *, method: str = "auto", tol: float = 1e-9,
             max_iter: int | None = None, polish: bool = False) -> SolveReport:
    """Minimize the objective over the tangent-plane polytope and the linear rows.

    ``method="activeset"`` uses the dense dual active-set solver;
    ``"dual"`` solves the nonnegative dual QP in the tangent multipliers
    (diagonal objective without extra linear rows only). ``"auto"``
    picks the dual route when it applies and the dimension is large.
    Tangent rows are scaled to unit norm before solving.
    """
    inst = lin.instance
    start = time.perf_counter()
    H, g = inst.qp_form()
    norms = np.linalg.norm(lin.normals, axis=1)
    norms[norms == 0] = 1.0
    G = lin.normals / norms[:, None]
    h = lin.rhs / norms
    dual_ok = H.ndim == 1 and not inst.has_linear_rows
    if method == "auto":
        method = "dual" if dual_ok and inst.dim > 2000 else "activeset"
    if method == "dual":
        if not dual_ok:
            raise ValueError("the dual route needs a diagonal objective and no extra linear rows")
        x, u, iters, converged = _dual_route(lin, H, g, G, h, tol, max_iter)
        kkt = _kkt_report(H, g, G, h, x, u)
    elif method == "activeset":
        Gall = np.vstack([G, inst.C]) if inst.C.shape[0] else G
        hall = np.concatenate([h, inst.c]) if inst.C.shape[0] else h
        res = active_set_qp(H, g, Gall, hall, inst.Ceq if inst.Ceq.shape[0] else None,
                            inst.ceq if inst.Ceq.shape[0] else None, max_iter=max_iter)
        x, iters, converged = res.x, res.iterations, True
        kkt = res.kkt
    else:
        raise ValueError(f"unknown method {method!r}")
    E = inst.ellipsoid
    violation = float(E.value(x) - E.radius_sq)
    report = SolveReport(x, inst.objective(x), lin.n_points, violation,
                         bool(violation <= 1e-9 * E.radius_sq), kkt, iters,
                         time.perf_counter() - start, method,
                         str(lin.points.provenance.get("sampler", "given")), converged)
    if polish:
        from .oracle import project_onto_feasible

        report.polished_x = project_onto_feasible(inst, x)
        report.polished_objective = inst.objective(report.polished_x)
    return report


def refine(inst: QcqpInstance, schedule, *, sampler: str = "net", seed=None, reference=None,
           method: str = "auto", heights: str = "area", construction: str = "sobol",
           require_bounded_cover: bool | None = None) -> SolveReport:
    """Solve along an increasing schedule of point counts with nested point sets.

    All point sets are prefixes of one set of ``max(schedule)`` points,
    so each cover contains the next. ``reference`` is an exact solution
    (array or object with ``x``); when given, the trace records the
    distance to it. Returns the report at the largest ``N`` with the
    trace attached. ``require_bounded_cover`` defaults to requiring a
    certified cover only when the instance has no linear rows.
    """
    schedule = [check_count(n, "N") for n in schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be a nonempty strictly increasing list")
    full = generate_boundary_points(inst.ellipsoid, schedule[-1], sampler=sampler, seed=seed,
                                    heights=heights, construction=construction)
    if require_bounded_cover is None:
        # linear rows usually keep the relaxation bounded on their own
        require_bounded_cover = not inst.has_linear_rows
    x_ref = None if reference is None else np.asarray(getattr(reference, "x", reference))
    trace = []
    report = None
    for n in schedule:
        prefix = full.with_points(full.points[:n], "ellipsoid")
        lin = linearize(inst, points=prefix, require_bounded_cover=require_bounded_cover)
        report = solve_qp(lin, method=method)
        row = {"N": n, "objective": report.objective, "violation": report.violation}
        if x_ref is not None:
            row["error"] = float(np.linalg.norm(report.x - x_ref))
            row["relative_error"] = row["error"] / max(float(np.linalg.norm(x_ref)), 1e-300)
        trace.append(row)
    report.trace = trace
    report.sampler = sampler
    return report


def certificate_checks(report: SolveReport, inst: QcqpInstance, oracle) -> dict:
    """Consistency checks between a linearized solve and the exact solution.

    Returns a dict with

    * ``objectives_match`` / ``solutions_match``: objectives within 1e-8
      (relative to ``1 + |f*|``) and solutions within 1e-6;
      ``equal_objective_implies_equal_solution`` is their implication.
    * ``outside_implies_boundary``: when the relaxed solution leaves the
      feasible set, the exact solution has an active constraint.
    * ``relaxation_gap``: ``f* - f(x(N))``, nonnegative for a valid cover.
    * ``rate_slope``: least-squares slope of log error against log N
      over the trace, or ``None`` with fewer than two positive errors.
    """
    if oracle is None:
        raise ValueError("an oracle solution is required")
    x_star = np.asarray(oracle.x)
    f_star = float(oracle.objective)
    obj_match = bool(abs(report.objective - f_star) <= 1e-8 * (1.0 + abs(f_star)))
    sol_match = bool(np.linalg.norm(report.x - x_star) <= 1e-6)
    outside = not inst.in_U(report.x, tol=1e-9)
    E = inst.ellipsoid
    slack = [abs(E.value(x_star) - E.radius_sq) / E.radius_sq]
    if inst.C.shape[0]:
        slack.append(float(np.abs(inst.C @ x_star - inst.c).min()))
    on_boundary = bool(min(slack) <= 1e-7)
    slope = None
    pts = [(r["N"], r["error"]) for r in report.trace if r.get("error", 0) > 0]
    if len(pts) >= 2:
        n, err = np.log(np.array(pts, dtype=float)).T
        slope = float(np.polyfit(n, err, 1)[0])
    return {
        "objectives_match": obj_match,
        "solutions_match": sol_match,
        "equal_objective_implies_equal_solution": (not obj_match) or sol_match,
        "outside_U": outside,
        "oracle_on_boundary": on_boundary,
        "outside_implies_boundary": (not outside) or on_boundary,
        "relaxation_gap": f_star - report.objective,
        "rate_slope": slope,
    }


class TangentPlaneQCQP(BaseEstimator):
    """Estimator interface to the tangent-plane approximation.

    ``fit`` takes a :class:`QcqpInstance` and stores the solution in
    ``x_``, its objective in ``objective_`` and the full report in
    ``report_``.
    """

    def __init__(self, n_points: int | None = None, sampler: str = "net", seed=None,
                 method: str = "auto", polish: bool = False, heights: str = "area",
                 require_bounded_cover: bool = True):
        self.n_points = n_points
        self.sampler = sampler
        self.seed = seed
        self.method = method
        self.polish = polish
        self.heights = heights
        self.require_bounded_cover = require_bounded_cover

    def fit(self, X: QcqpInstance, y=None):
        if not isinstance(X, QcqpInstance):
            raise TypeError("fit expects a QcqpInstance")
        self.linearized_ = linearize(X, self.n_points, self.sampler, seed=self.seed,
                                     heights=self.heights,
                                     require_bounded_cover=self.require_bounded_cover)
        self.report_ = solve_qp(self.linearized_, method=self.method, polish=self.polish)
        self.x_ = self.report_.x
        self.objective_ = self.report_.objective
        return self

    def predict(self, X=None):
        """The fitted solution (the argument is ignored)."""
        return self.x_


def check_feasible(inst: QcqpInstance) -> np.ndarray:
    """A point of the feasible set, or :class:`InfeasibleError`.

    Minimizes the ellipsoid's quadratic over the linear rows.
    """
    E = inst.ellipsoid
    H = 2.0 * E.B
    g = -2.0 * E.apply_B(E.center)
    res = active_set_qp(H, g, inst.C if inst.C.shape[0] else None,
                        inst.c if inst.C.shape[0] else None,
                        inst.Ceq if inst.Ceq.shape[0] else None,
                        inst.ceq if inst.Ceq.shape[0] else None)
    if E.value(res.x) > E.radius_sq * (1 + 1e-12):
        raise InfeasibleError("the linear rows do not meet the ellipsoid")
    return res.x
