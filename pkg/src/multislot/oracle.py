"""Exact small-scale solvers used as ground truth.

Each solver returns its KKT residuals so callers can check that the
"exact" answer really is one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, nnls

from ._validation import InfeasibleError
from .activeset import solve_qp
from .linearizer import QcqpInstance, check_feasible
from .problem import RankingProblem, build_local_polytope

__all__ = [
    "MAX_ORACLE_DIM",
    "OracleSolution",
    "exact_qcqp",
    "project_onto_feasible",
    "enumerate_nonneg_qp",
    "ranking_primal_oracle",
    "barrier_qcqp",
]

MAX_ORACLE_DIM = 100


@dataclass(eq=False)
class OracleSolution:
    """Exact minimizer with its certificate.

    ``multiplier`` is the quadratic constraint's multiplier (``None``
    where not applicable).
    """

    x: np.ndarray
    objective: float
    method: str
    kkt: dict = field(default_factory=dict)
    multiplier: float | None = None
    ineq_multipliers: np.ndarray | None = None

    @property
    def kkt_max(self) -> float:
        return max(self.kkt.values()) if self.kkt else 0.0


def _inner(inst: QcqpInstance, lam: float, B_dense, Bb):
    """Minimize ``f(x) + lam q(x)`` over the linear rows, scaled by ``1 / (1 + lam)``."""
    A = inst.A if inst.A.ndim == 2 else np.diag(inst.A)
    w = 1.0 / (1.0 + lam)
    H = 2.0 * w * (A + lam * B_dense)
    g = -2.0 * w * (A @ inst.a + lam * Bb)
    res = solve_qp(H, g, inst.C if inst.C.shape[0] else None, inst.c if inst.C.shape[0] else None,
                   inst.Ceq if inst.Ceq.shape[0] else None,
                   inst.ceq if inst.Ceq.shape[0] else None)
    return res, w


def exact_qcqp(inst: QcqpInstance, *, tol: float = 1e-10, max_dim: int = MAX_ORACLE_DIM) -> OracleSolution:
    """Exact solution of a convex single-ellipsoid QCQP by multiplier search.

    For a multiplier ``lam >= 0`` the Lagrangian subproblem over the linear
    rows is a strictly convex QP solved exactly by the active-set method.
    Its solution's ellipsoid value decreases in ``lam``; the optimal
    multiplier is 0 when that value already fits, otherwise the root of
    ``q(x(lam)) = r``, bracketed by doubling and located by Brent's method.

    Raises
    ------
    ValueError
        If the dimension exceeds ``max_dim``.
    InfeasibleError
        If the linear rows miss the ellipsoid.
    """
    if inst.dim > max_dim:
        raise ValueError(f"dimension {inst.dim} exceeds the oracle cap {max_dim}")
    check_feasible(inst)
    E = inst.ellipsoid
    B = E.B if E.B.ndim == 2 else np.diag(E.B)
    Bb = B @ E.center
    r = E.radius_sq

    def slack(lam):
        res, _ = _inner(inst, lam, B, Bb)
        return (E.value(res.x) - r) / r

    lam = 0.0
    if slack(0.0) > 0:
        hi = 1.0
        while slack(hi) > 0:
            hi *= 2.0
            if hi > 1e16:
                raise InfeasibleError("the ellipsoid is met only at a single point")
        lam = brentq(slack, 0.0 if hi == 1.0 else hi / 2.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                     maxiter=500)
    res, w = _inner(inst, lam, B, Bb)
    x = res.x
    u = res.ineq_multipliers / w
    v = res.eq_multipliers / w
    A = inst.A if inst.A.ndim == 2 else np.diag(inst.A)
    grad = 2.0 * A @ (x - inst.a) + 2.0 * lam * B @ (x - E.center)
    q_slack = E.value(x) - r
    feas = max(0.0, q_slack / r)
    comp = abs(lam * q_slack)
    if inst.C.shape[0]:
        grad = grad + inst.C.T @ u
        lin = inst.C @ x - inst.c
        feas = max(feas, float(lin.max()))
        comp = max(comp, float(np.abs(u * lin).max()))
    if inst.Ceq.shape[0]:
        grad = grad + inst.Ceq.T @ v
        feas = max(feas, float(np.abs(inst.Ceq @ x - inst.ceq).max()))
    kkt = {
        "stationarity": float(np.abs(grad).max()) / (1.0 + lam),
        "primal_feasibility": feas,
        "dual_feasibility": max(0.0, float(-u.min(initial=0.0))),
        "complementarity": comp / (1.0 + lam),
    }
    if max(kkt.values()) > max(tol, 1e-9) * 10:
        raise RuntimeError(f"oracle KKT residual {max(kkt.values()):.2e} too large")
    return OracleSolution(x, inst.objective(x), "multiplier-search", kkt, lam, u)


def project_onto_feasible(inst: QcqpInstance, point) -> np.ndarray:
    """Euclidean projection of ``point`` onto the QCQP's feasible set."""
    s = inst.dim
    proj = QcqpInstance(np.ones(s), np.asarray(point, dtype=float), inst.ellipsoid,
                        C=inst.C if inst.C.shape[0] else None, c=inst.c if inst.C.shape[0] else None,
                        Ceq=inst.Ceq if inst.Ceq.shape[0] else None,
                        ceq=inst.ceq if inst.Ceq.shape[0] else None)
    return exact_qcqp(proj, max_dim=max(s, MAX_ORACLE_DIM)).x


def enumerate_nonneg_qp(M, q, *, tol: float = 1e-9) -> OracleSolution:
    """Solve ``min 0.5 y'My - y'q, y >= 0`` by trying every support.

    Supports are visited by increasing size. On a support ``S`` the
    stationarity equations ``M_SS y_S = q_S`` are solved by least squares;
    the first candidate that is consistent, nonnegative and has a
    nonnegative gradient off the support satisfies the KKT conditions and
    is optimal. Works for singular ``M``; exponential in the dimension.
    """
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    scale = 1.0 + np.abs(q).max() + np.abs(M).max()
    for size in range(n + 1):
        for S in combinations(range(n), size):
            S = list(S)
            y = np.zeros(n)
            if S:
                sol = np.linalg.lstsq(M[np.ix_(S, S)], q[S], rcond=None)[0]
                if sol.min() < -tol:
                    continue
                y[S] = np.maximum(sol, 0.0)
            grad = M @ y - q
            if np.abs(grad[S]).max(initial=0.0) > tol * scale:
                continue
            if grad.min(initial=0.0) < -tol * scale:
                continue
            kkt = {
                "stationarity": float(np.abs(grad[S]).max(initial=0.0)),
                "primal_feasibility": 0.0,
                "dual_feasibility": max(0.0, float(-grad.min(initial=0.0))),
                "complementarity": float(np.abs(y * grad).max(initial=0.0)),
            }
            return OracleSolution(y, float(0.5 * y @ M @ y - y @ q), "support-enumeration", kkt)
    raise RuntimeError("no KKT point found")


def ranking_primal_oracle(problem: RankingProblem) -> OracleSolution:
    """Solve the full primal ranking QP directly with the active-set method.

    Minimizes ``-x'p + gamma/2 x'x`` with both threshold rows and every
    user's serving polytope. Slot sums enter as equalities.
    """
    n, J, K = problem.n_users, problem.n_items, problem.n_slots
    local = build_local_polytope(J, K)
    dim = problem.dim
    eye = np.eye(dim)
    C = sp.block_diag([local.item_sum()] * n).toarray()
    B = sp.block_diag([local.slot_sum()] * n).toarray()
    G = np.vstack([eye, -eye, C, -problem.dollar[None, :], -problem.d[None, :]])
    h = np.concatenate([np.ones(dim), np.zeros(dim), np.ones(n * J), [-problem.R, -problem.I]])
    res = solve_qp(np.full(dim, problem.gamma), -problem.p, G, h, B, np.ones(n * K))
    return OracleSolution(res.x, problem.objective(res.x), "active-set", res.kkt, None,
                          res.ineq_multipliers)


def barrier_qcqp(inst: QcqpInstance, *, gap: float = 1e-11, max_newton: int = 200) -> OracleSolution:
    """Solve the QCQP by log-barrier continuation with dense Newton steps.

    An interior penalty method independent of :func:`exact_qcqp`: it
    never solves a QP, never searches a multiplier, and only touches the
    constraint functions. The barrier weight grows tenfold per stage
    until the duality-gap bound ``m / t`` falls below ``gap``. Needs a
    feasible set with interior and supports inequality rows only.
    """
    if inst.Ceq.shape[0]:
        raise ValueError("the barrier method supports inequality rows only")
    E = inst.ellipsoid
    A = inst.A if inst.A.ndim == 2 else np.diag(inst.A)
    B = E.B if E.B.ndim == 2 else np.diag(E.B)
    C, c = inst.C, inst.c
    m = C.shape[0] + 1

    def slacks(x):
        return np.concatenate([[E.radius_sq - E.value(x)], c - C @ x])

    x = _interior_point(inst)
    t = 1.0
    while m / t > gap:
        t *= 10.0
        for _ in range(max_newton):
            sl = slacks(x)
            gq = 2.0 * B @ (x - E.center)
            grad = t * 2.0 * A @ (x - inst.a) + gq / sl[0] + C.T @ (1.0 / sl[1:])
            hess = (t * 2.0 * A + 2.0 * B / sl[0] + np.outer(gq, gq) / sl[0] ** 2
                    + C.T @ (C / sl[1:, None] ** 2))
            step = -np.linalg.solve(hess, grad)
            decrement = float(-grad @ step)
            if decrement < 1e-20:
                break
            alpha = 1.0
            phi0 = t * inst.objective(x) - np.log(sl).sum()
            while True:
                xn = x + alpha * step
                sn = slacks(xn)
                if np.all(sn > 0) and (t * inst.objective(xn) - np.log(sn).sum()
                                       <= phi0 - 0.25 * alpha * decrement):
                    break
                alpha *= 0.5
                if alpha < 1e-16:
                    break
            if alpha < 1e-16:
                break
            x = xn
    # Barrier multipliers 1/(t * slack) lose precision on nearly active
    # rows, so certify x with multipliers refitted by nonnegative least squares.
    sl = slacks(x)
    normals = np.column_stack([2.0 * B @ (x - E.center), C.T])
    weights, _ = nnls(normals, -2.0 * A @ (x - inst.a))
    lam, u = weights[0], weights[1:]
    grad = 2.0 * A @ (x - inst.a) + normals @ weights
    kkt = {
        "stationarity": float(np.abs(grad).max()),
        "primal_feasibility": float(max(0.0, -sl.min())),
        "dual_feasibility": 0.0,
        "complementarity": float(np.abs(weights * sl).max()),
    }
    return OracleSolution(x, inst.objective(x), "log-barrier", kkt, float(lam), u)


def _interior_point(inst: QcqpInstance) -> np.ndarray:
    """A point strictly inside both the ellipsoid and the linear rows."""
    from scipy.optimize import linprog

    E = inst.ellipsoid
    x_q = check_feasible(inst)
    if E.value(x_q) >= E.radius_sq:
        raise InfeasibleError("the feasible set has no interior")
    if not inst.C.shape[0]:
        return x_q
    # Chebyshev center of the linear rows: max r s.t. C x + r ||C_i|| <= c
    norms = np.linalg.norm(inst.C, axis=1)
    s = inst.dim
    res = linprog(np.r_[np.zeros(s), -1.0], A_ub=np.c_[inst.C, norms], b_ub=inst.c,
                  bounds=[(None, None)] * s + [(0, 1.0)], method="highs")
    if res.status != 0 or res.x[-1] <= 0:
        raise InfeasibleError("the linear rows have no interior")
    x_c = res.x[:s]
    theta = 0.5
    while theta > 1e-12:
        x = (1 - theta) * x_q + theta * x_c
        if E.value(x) < E.radius_sq and np.all(inst.C @ x < inst.c):
            return x
        theta *= 0.5
    raise InfeasibleError("could not find a strictly feasible point")
