"""Nonnegative dual QP ``min 0.5 y'My - y'q, y >= 0`` of the ranking problem.

``y = (mu0, mu1, eta)`` stacks the revenue multiplier, the impression
multiplier and the local-constraint multipliers. Products with ``M`` go
through ``A'(A y) / gamma`` so the sparse factor is all that is stored.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import NotConvexError, check_positive
from .problem import StackedSystem

__all__ = [
    "DualOptions",
    "DualProblem",
    "DualSolution",
    "dual_objective",
    "solve_nonneg_qp",
    "solve_dual",
]

logger = logging.getLogger(__name__)

_STEP_MIN, _STEP_MAX = 1e-12, 1e12
_SUBSPACE_EVERY = 100
_SUBSPACE_MAX = 500  # largest free set for the dense subspace step


@dataclass(frozen=True)
class DualOptions:
    tol: float = 1e-8
    max_iter: int | None = None
    method: str = "pg"
    polish: bool = True
    record_history: bool = False
    rho: float = 1.0
    relaxation: float = 1.6

    def iteration_cap(self, dim: int) -> int:
        if self.max_iter is not None:
            return int(self.max_iter)
        return max(50 * dim, 10_000)


@dataclass(frozen=True, eq=False)
class DualProblem:
    """Operator form of the dual: ``M`` applied as a callable, linear term ``q``."""

    matvec: object
    q: np.ndarray
    dim: int

    @classmethod
    def from_system(cls, sys: StackedSystem, p: np.ndarray) -> "DualProblem":
        q = sys.linear_term(np.asarray(p, dtype=float))
        return cls(sys.matvec, q, q.shape[0])

    @classmethod
    def from_matrix(cls, M, q) -> "DualProblem":
        q = np.asarray(q, dtype=float)
        Mop = M if sp.issparse(M) else np.asarray(M, dtype=float)
        if Mop.shape != (q.shape[0], q.shape[0]):
            raise ValueError("M and q dimensions disagree")
        return cls(lambda y: Mop @ y, q, q.shape[0])


@dataclass(eq=False)
class DualSolution:
    """Dual multipliers with convergence diagnostics.

    ``dual_residual`` is the projected-gradient stationarity
    ``||y - max(y - (My - q), 0)||_inf``. ``primal_residual`` is
    ``||min(My - q, 0)||_inf``; since ``My - q`` equals the constraint
    slacks of ``x = (p + A y) / gamma``, it is that point's worst
    constraint violation.
    """

    y: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    complementarity: float
    objective: float
    converged: bool
    wall_time: float = 0.0
    method: str = "pg"
    history: list = field(default_factory=list)

    @property
    def mu0(self) -> float:
        return float(self.y[0])

    @property
    def mu1(self) -> float:
        return float(self.y[1])

    @property
    def eta(self) -> np.ndarray:
        return self.y[2:]

    def to_dict(self) -> dict:
        return {
            "mu0": self.mu0,
            "mu1": self.mu1,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "complementarity": self.complementarity,
            "objective": self.objective,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "method": self.method,
            "eta": self.eta.tolist(),
        }


def dual_objective(y, M, q) -> float:
    """``0.5 y'My - y'q``; ``M`` may be a matrix or a callable."""
    y = np.asarray(y, dtype=float)
    q = np.asarray(q, dtype=float)
    if y.shape != q.shape:
        raise ValueError(f"y has shape {y.shape} but q has shape {q.shape}")
    My = M(y) if callable(M) else M @ y
    if np.shape(My) != y.shape:
        raise ValueError("M and y dimensions disagree")
    return float(0.5 * y @ My - y @ q)


def _residuals(y, grad):
    stat = float(np.abs(y - np.maximum(y - grad, 0.0)).max(initial=0.0))
    prim = float(np.maximum(-grad, 0.0).max(initial=0.0))
    comp = float(np.abs(y * grad).max(initial=0.0))
    return stat, prim, comp


def solve_nonneg_qp(prob: DualProblem, opts: DualOptions = DualOptions(), y0=None) -> DualSolution:
    """Solve ``min 0.5 y'My - y'q`` over ``y >= 0``."""
    start = time.perf_counter()
    if opts.method == "pg":
        sol = _projected_gradient(prob, opts, y0)
    elif opts.method == "admm":
        sol = _admm(prob, opts, y0)
    else:
        raise ValueError(f"unknown method {opts.method!r}")
    if opts.polish:
        sol = _polish(prob, sol)
    sol.converged = sol.dual_residual <= opts.tol
    sol.wall_time = time.perf_counter() - start
    if not sol.converged:
        logger.warning("dual solve stopped at residual %.3e after %d iterations",
                       sol.dual_residual, sol.iterations)
    return sol


def solve_dual(sys: StackedSystem, p, gamma: float, opts: DualOptions = DualOptions()) -> DualSolution:
    """Optimal ``(mu0, mu1, eta)`` for the stacked ranking system."""
    gamma = check_positive(gamma, "gamma")
    if not np.isclose(gamma, sys.gamma, rtol=1e-14, atol=0):
        raise ValueError("gamma differs from the one the stacked system was built with")
    return solve_nonneg_qp(DualProblem.from_system(sys, p), opts)


def _projected_gradient(prob: DualProblem, opts: DualOptions, y0) -> DualSolution:
    """Projected gradient with Barzilai-Borwein steps.

    The step is taken along the projected arc's chord with an exact line
    search, which keeps iterates feasible and the objective monotone.
    """
    q = prob.q
    y = np.zeros(prob.dim) if y0 is None else np.maximum(np.asarray(y0, dtype=float), 0.0)
    My = prob.matvec(y)
    grad = My - q
    obj = 0.5 * y @ My - y @ q
    alpha = 1.0
    history = [obj] if opts.record_history else []
    cap = opts.iteration_cap(prob.dim)
    it = 0
    stat, prim, comp = _residuals(y, grad)
    while stat > opts.tol and it < cap:
        it += 1
        direction = np.maximum(y - alpha * grad, 0.0) - y
        Md = prob.matvec(direction)
        curv = float(direction @ Md)
        slope = float(grad @ direction)
        if curv < -1e-10 * max(1.0, float(direction @ direction)):
            raise NotConvexError("negative curvature: M is not positive semidefinite")
        if slope >= 0:
            # Only possible from rounding near a fixed point; fall back to a unit step size.
            if alpha == 1.0:
                break
            alpha = 1.0
            continue
        t = 1.0 if curv <= 0 else min(1.0, -slope / curv)
        y = np.maximum(y + t * direction, 0.0)
        grad = grad + t * Md
        obj = obj + t * slope + 0.5 * t * t * curv
        if opts.record_history:
            history.append(obj)
        ss = t * t * float(direction @ direction)
        sy = t * t * curv
        alpha = float(np.clip(ss / sy, _STEP_MIN, _STEP_MAX)) if sy > 0 else _STEP_MAX
        if it % 50 == 0:
            # refresh accumulated gradient drift
            My = prob.matvec(y)
            grad = My - q
            obj = 0.5 * y @ My - y @ q
        if it % _SUBSPACE_EVERY == 0:
            step = _subspace_step(prob, y, grad, obj)
            if step is not None:
                y, grad, obj = step
                if opts.record_history:
                    history.append(obj)
        stat, prim, comp = _residuals(y, grad)
    My = prob.matvec(y)
    grad = My - q
    stat, prim, comp = _residuals(y, grad)
    return DualSolution(y, it, prim, stat, comp, float(0.5 * y @ My - y @ q),
                        stat <= opts.tol, method="pg", history=history)


def _subspace_step(prob: DualProblem, y, grad, obj):
    """Active-set descent on the free coordinates.

    When the negative gradient has a part in the null space of ``M`` on the
    current face, the objective falls linearly along it, so that ray is
    followed to the first blocking bound. Otherwise the min-norm Newton
    step is taken, cut short at the first blocking bound. Blocking
    coordinates leave the face and the face is re-solved. Ends at the face
    minimizer or when no progress is made.
    """
    free = np.flatnonzero((y > 0) | (grad < 0))
    if free.size == 0 or free.size > _SUBSPACE_MAX:
        return None
    cols = np.zeros((prob.dim, free.size))
    cols[free, np.arange(free.size)] = 1.0
    M_ff = np.column_stack([prob.matvec(cols[:, c]) for c in range(free.size)])[free]
    yf = y[free].copy()
    gf = grad[free].copy()
    face = np.ones(free.size, dtype=bool)
    decrease = 0.0
    for _ in range(2 * free.size + 2):
        idx = np.flatnonzero(face)
        if idx.size == 0:
            break
        w, V = np.linalg.eigh(M_ff[np.ix_(idx, idx)])
        keep = w > 1e-12 * max(float(w.max()), 1.0)
        coef = V.T @ -gf[idx]
        null = ~keep & (np.abs(coef) > 1e-12 * max(1.0, float(np.abs(gf).max())))
        delta = np.zeros(free.size)
        if null.any():
            delta[idx] = V[:, null] @ coef[null]
        else:
            delta[idx] = V[:, keep] @ (coef[keep] / w[keep])
        Md = M_ff @ delta
        slope, curv = float(gf @ delta), float(delta @ Md)
        if slope >= -1e-300:
            break
        if null.any():
            t = np.inf  # linear along the ray; only a bound stops it
        else:
            t = min(1.0, -slope / curv) if curv > 0 else np.inf
        neg = delta < 0
        ratios = np.full(free.size, np.inf)
        ratios[neg] = yf[neg] / -delta[neg]
        blocked = ratios.min() <= t
        if blocked:
            t = float(ratios.min())
        if not np.isfinite(t):
            return None  # unbounded ray; leave it to the caller's checks
        yf = np.maximum(yf + t * delta, 0.0)
        if blocked:
            yf[ratios <= t * (1 + 1e-12)] = 0.0
            face &= ratios > t * (1 + 1e-12)
        gf = gf + t * Md
        decrease += t * slope + 0.5 * t * t * curv
        if not blocked and not null.any():
            break
    if decrease >= 0:
        return None
    y_new = y.copy()
    y_new[free] = yf
    My = prob.matvec(y_new)
    obj_new = float(0.5 * y_new @ My - y_new @ prob.q)
    if obj_new >= obj:
        return None
    return y_new, My - prob.q, obj_new


def _admm(prob: DualProblem, opts: DualOptions, y0) -> DualSolution:
    """Over-relaxed ADMM splitting ``y = z``, ``z >= 0``.

    Needs ``M`` as an explicit matrix, recovered here column by column if
    only a callable is available.
    """
    n = prob.dim
    Mmat = _materialize(prob)
    rho, relax = opts.rho, opts.relaxation
    lu = spla.splu((Mmat + rho * sp.identity(n, format="csc")).tocsc())
    z = np.zeros(n) if y0 is None else np.maximum(np.asarray(y0, dtype=float), 0.0)
    u = np.zeros(n)
    cap = opts.iteration_cap(n)
    history = []
    it = 0
    stat = np.inf
    while it < cap:
        it += 1
        y = lu.solve(prob.q + rho * (z - u))
        y_hat = relax * y + (1 - relax) * z
        z = np.maximum(y_hat + u, 0.0)
        u = u + y_hat - z
        if it % 10 == 0 or it == cap:
            grad = prob.matvec(z) - prob.q
            stat = _residuals(z, grad)[0]
            if opts.record_history:
                history.append(float(0.5 * z @ (grad + prob.q) - z @ prob.q))
            if stat <= opts.tol:
                break
    grad = prob.matvec(z) - prob.q
    stat, prim, comp = _residuals(z, grad)
    return DualSolution(z, it, prim, stat, comp, float(0.5 * z @ (grad + prob.q) - z @ prob.q),
                        stat <= opts.tol, method="admm", history=history)


def _materialize(prob: DualProblem) -> sp.csc_matrix:
    owner = getattr(prob.matvec, "__self__", None)
    if isinstance(owner, StackedSystem):
        return owner.M.tocsc()
    cols = [prob.matvec(e) for e in np.eye(prob.dim)]
    return sp.csc_matrix(np.column_stack(cols))


def _polish(prob: DualProblem, sol: DualSolution) -> DualSolution:
    """Solve the stationarity equations on the identified support.

    Moves the positive coordinates by the minimum-norm correction that
    zeroes their gradient; kept only when it stays feasible and lowers the
    stationarity residual.
    """
    y = sol.y
    support = np.flatnonzero(y > 0)
    if support.size == 0 or support.size > 2000:
        return sol
    E = np.zeros((prob.dim, support.size))
    E[support, np.arange(support.size)] = 1.0
    M_s = np.column_stack([prob.matvec(E[:, c]) for c in range(support.size)])[support]
    grad = prob.matvec(y) - prob.q
    delta = np.linalg.lstsq(M_s, -grad[support], rcond=1e-12)[0]
    y_new = y.copy()
    y_new[support] += delta
    if y_new[support].min() < 0:
        return sol
    My = prob.matvec(y_new)
    g_new = My - prob.q
    stat, prim, comp = _residuals(y_new, g_new)
    if stat >= sol.dual_residual:
        return sol
    return DualSolution(y_new, sol.iterations, prim, stat, comp,
                        float(0.5 * y_new @ My - y_new @ prob.q), True,
                        method=sol.method, history=sol.history)
