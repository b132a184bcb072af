"""Dual active-set solver for strictly convex quadratic programs.

Solves::

    minimize    0.5 x'Hx + g'x
    subject to  E x  = e
                G x <= h

with ``H`` positive definite, following Goldfarb and Idnani (1983). The
method starts from the unconstrained minimizer and adds violated
constraints one at a time while keeping the active set dual feasible, so
every iterate is the exact optimum of a relaxed problem. On exit the
final active set is re-solved as a linear system, which gives solutions
with residuals near machine precision; the KKT residuals are returned
with the result so callers can certify them.

``H`` may be a dense matrix or a 1-D array holding a diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ._validation import InfeasibleError, NotConvexError, as_dense

__all__ = [
    "QPResult",
    "solve_qp",
]


class _HessianSolve:
    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        self.diagonal = H.ndim == 1
        if self.diagonal:
            if np.any(H <= 0):
                raise NotConvexError("Hessian diagonal must be positive")
            self.d = H
        else:
            try:
                self.cho = sla.cho_factor(H, lower=True, check_finite=True)
            except np.linalg.LinAlgError as exc:
                raise NotConvexError("Hessian is not positive definite") from exc
            self.H = H

    def solve(self, v: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return v / (self.d if v.ndim == 1 else self.d[:, None])
        return sla.cho_solve(self.cho, v, check_finite=False)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return self.d * v
        return self.H @ v


@dataclass
class QPResult:
    """Solution of a convex QP with its KKT certificate.

    ``ineq_multipliers`` and ``eq_multipliers`` satisfy
    ``Hx + g + G'u + E'w = 0``. ``kkt`` holds the four residuals
    (stationarity, primal feasibility, dual feasibility, complementarity)
    in absolute terms.
    """

    x: np.ndarray
    objective: float
    ineq_multipliers: np.ndarray
    eq_multipliers: np.ndarray
    active: np.ndarray
    iterations: int
    kkt: dict = field(default_factory=dict)

    @property
    def kkt_max(self) -> float:
        return max(self.kkt.values()) if self.kkt else 0.0


def _kkt(hess, g, G, h, E, e, x, u, w):
    grad = hess.matvec(x) + g
    if G.shape[0]:
        grad = grad + G.T @ u
        slack = G @ x - h
        feas = max(0.0, float(slack.max()))
        comp = float(np.abs(u * slack).max())
        dual = max(0.0, float(-u.min()))
    else:
        feas = comp = dual = 0.0
    if E.shape[0]:
        grad = grad + E.T @ w
        feas = max(feas, float(np.abs(E @ x - e).max()))
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal_feasibility": feas,
        "dual_feasibility": dual,
        "complementarity": comp,
    }


def solve_qp(H, g, G=None, h=None, E=None, e=None, *, tol: float = 1e-12,
             max_iter: int | None = None) -> QPResult:
    """Minimize ``0.5 x'Hx + g'x`` subject to ``Ex = e`` and ``Gx <= h``.

    Parameters
    ----------
    H : ndarray
        Positive definite Hessian, dense ``(n, n)`` or diagonal ``(n,)``.
    g : ndarray of shape (n,)
    G, h : inequality rows and bounds, optional.
    E, e : equality rows and right-hand sides, optional.
    tol : float
        Violation threshold, measured per unit row norm.
    max_iter : int, optional
        Cap on add/drop steps; defaults to ``10 * (n + m)``.

    Returns
    -------
    QPResult

    Raises
    ------
    InfeasibleError
        If the constraints are inconsistent.
    NotConvexError
        If ``H`` is not positive definite.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    hess = _HessianSolve(H)
    G = np.zeros((0, n)) if G is None else as_dense(G).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
    E = np.zeros((0, n)) if E is None else as_dense(E).reshape(-1, n)
    e = np.zeros(0) if e is None else np.asarray(e, dtype=float).ravel()
    m_in, m_eq = G.shape[0], E.shape[0]
    if h.shape[0] != m_in or e.shape[0] != m_eq:
        raise ValueError("constraint rows and right-hand sides disagree in length")
    if max_iter is None:
        max_iter = 10 * (n + m_in + m_eq) + 100

    # Constraint k < m_eq refers to an equality, otherwise to G[k - m_eq].
    rows = np.vstack([E, G]) if m_eq else G
    rhs = np.concatenate([e, h]) if m_eq else h
    norms = np.linalg.norm(rows, axis=1) if rows.shape[0] else np.zeros(0)
    norms[norms == 0] = 1.0
    sign = np.ones(rows.shape[0])  # equalities may enter with flipped sign

    x = -hess.solve(g)
    active: list[int] = []
    u_act = np.zeros(0)
    W = np.zeros((n, 0))  # H^{-1} N for the active normals N
    iterations = 0

    def step_directions(a_p):
        Hinv_a = hess.solve(a_p)
        if not active:
            return -Hinv_a, np.zeros(0)
        N = (rows[active] * sign[active, None]).T
        S = N.T @ W
        rho = -np.linalg.lstsq(S, W.T @ a_p, rcond=None)[0]
        return -Hinv_a - W @ rho, rho

    pending = list(range(m_eq))
    while True:
        if pending:
            p = pending.pop(0)
            viol = rows[p] @ x - rhs[p]
            if viol < 0:
                sign[p] = -1.0
                viol = -viol
            if viol <= tol * norms[p] * (1.0 + abs(rhs[p])):
                # Already satisfied; still enter it so it stays fixed.
                pass
        else:
            if m_in == 0:
                break
            slack = (G @ x - h) / norms[m_eq:]
            scaled = slack / (1.0 + np.abs(h) / norms[m_eq:])
            if active:
                scaled[[k - m_eq for k in active if k >= m_eq]] = -np.inf
            q = int(np.argmax(scaled))
            if scaled[q] <= tol:
                break
            p = q + m_eq
        a_p = rows[p] * sign[p]
        u_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise RuntimeError("active-set iteration cap exceeded")
            viol = a_p @ x - rhs[p] * sign[p]
            z, rho = step_directions(a_p)
            curv = -(a_p @ z)
            ref = a_p @ hess.solve(a_p)
            dependent = curv <= 1e-13 * max(ref, 1e-300)
            t1, drop = np.inf, -1
            for idx, k in enumerate(active):
                if k >= m_eq and rho[idx] < 0:
                    ratio = u_act[idx] / -rho[idx]
                    if ratio < t1:
                        t1, drop = ratio, idx
            if p < m_eq and dependent:
                if abs(viol) <= 1e-10 * norms[p] * (1.0 + abs(rhs[p])):
                    break  # redundant equality
                if drop < 0:
                    raise InfeasibleError("equality constraints are inconsistent")
            t2 = np.inf if dependent else viol / curv
            t = min(t1, t2)
            if not np.isfinite(t):
                raise InfeasibleError("constraints are infeasible")
            if not dependent:
                x = x + t * z
            u_act = u_act + t * rho
            u_p += t
            if t == t2:
                active.append(p)
                u_act = np.append(u_act, u_p)
                W = np.column_stack([W, hess.solve(a_p)])
                break
            del active[drop]
            u_act = np.delete(u_act, drop)
            W = np.delete(W, drop, axis=1)

    x, u_act = _refine(hess, g, rows, rhs, sign, active, x, u_act)
    u = np.zeros(m_in)
    w = np.zeros(m_eq)
    for idx, k in enumerate(active):
        if k < m_eq:
            w[k] = u_act[idx] * sign[k]
        else:
            u[k - m_eq] = u_act[idx]
    kkt = _kkt(hess, g, G, h, E, e, x, u, w)
    obj = float(0.5 * x @ hess.matvec(x) + g @ x)
    act_ineq = np.array(sorted(k - m_eq for k in active if k >= m_eq), dtype=int)
    return QPResult(x, obj, u, w, act_ineq, iterations, kkt)


def _refine(hess, g, rows, rhs, sign, active, x, u_act):
    """Re-solve the equality-constrained problem on the final active set."""
    if not active:
        return -hess.solve(g), u_act
    N = rows[active] * sign[active, None]
    b = rhs[active] * sign[active]
    W = hess.solve(N.T)
    S = N @ W
    # x = -H^{-1}(g + N'u), N x = b  =>  S u = -(b + N H^{-1} g)
    Hg = hess.solve(g)
    try:
        u_new = np.linalg.solve(S, -(b + N @ Hg))
    except np.linalg.LinAlgError:
        return x, u_act
    x_new = -Hg - W @ u_new
    if not np.all(np.isfinite(x_new)):
        return x, u_act
    # keep the refined point only if it is at least as accurate
    old = np.abs(N @ x - b).max()
    new = np.abs(N @ x_new - b).max()
    if new <= max(old, 1e-14 * (1 + np.abs(b).max())):
        return x_new, u_new
    return x, u_act
