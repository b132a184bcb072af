"""Multi-slot ranking problem, per-user constraint polytopes, stacked dual data.

Flat index layout shared by every module: user-major, then item, then
slot, i.e. ``flat = (i * J + j) * K + k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._validation import check_count, check_positive, check_unit_interval, check_vector

__all__ = [
    "flat_index",
    "RankingProblem",
    "build_problem",
    "LocalPolytope",
    "build_local_polytope",
    "StackedSystem",
    "assemble_stacked",
    "sparsity_ratio",
    "closed_form_sparsity",
    "closed_form_nonzeros",
    "random_problem",
]


def flat_index(i: int, j: int, k: int, J: int, K: int) -> int:
    return (i * J + j) * K + k


@dataclass(frozen=True, eq=False)
class RankingProblem:
    """Constrained multi-slot click maximization instance.

    Attributes
    ----------
    n_users, n_items, n_slots : int
    p : ndarray of shape (n_users * n_items * n_slots,)
        Click probabilities in the flat layout.
    c : ndarray of shape (n_items,)
        Revenue per click; positive exactly on ``sponsored``.
    d : ndarray of shape (n_users * n_items * n_slots,)
        Indicator of impression-important items.
    R, I : float
        Revenue and impression thresholds.
    gamma : float
        Strength of the ``gamma/2 ||x||^2`` regularizer.
    sponsored, impression : tuple of int
    """

    n_users: int
    n_items: int
    n_slots: int
    p: np.ndarray
    c: np.ndarray
    d: np.ndarray
    R: float
    I: float
    gamma: float
    sponsored: tuple
    impression: tuple

    @property
    def dim(self) -> int:
        return self.n_users * self.n_items * self.n_slots

    @cached_property
    def dollar(self) -> np.ndarray:
        """Expected revenue per serve, ``p * c`` with ``c`` broadcast over users and slots."""
        c_flat = np.tile(np.repeat(self.c, self.n_slots), self.n_users)
        return self.p * c_flat

    def objective(self, x: np.ndarray) -> float:
        """Regularized primal objective ``-x'p + gamma/2 x'x``."""
        return float(-x @ self.p + 0.5 * self.gamma * x @ x)

    def user_slice(self, i: int) -> slice:
        size = self.n_items * self.n_slots
        return slice(i * size, (i + 1) * size)

    def to_dict(self) -> dict:
        return {
            "n": self.n_users,
            "J": self.n_items,
            "K": self.n_slots,
            "p": self.p.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "R": self.R,
            "I": self.I,
            "gamma": self.gamma,
            "sponsored": list(self.sponsored),
            "impression": list(self.impression),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RankingProblem":
        return build_problem(data)

    @classmethod
    def from_json(cls, text: str) -> "RankingProblem":
        return build_problem(json.loads(text))


def build_problem(config: dict) -> RankingProblem:
    """Validate a problem description and return a :class:`RankingProblem`.

    ``config`` uses the keys of the JSON problem file: ``n, J, K, p, c, R,
    I, gamma, sponsored, impression`` and optionally ``d``. When ``d`` is
    omitted it is derived from ``impression``; when present it must agree.
    """
    n = check_count(config["n"], "n")
    J = check_count(config["J"], "J")
    K = check_count(config["K"], "K")
    if K > J:
        raise ValueError(f"K={K} slots cannot be filled from J={J} items without repeats")
    size = n * J * K
    p = check_unit_interval(check_vector(config["p"], "p", size), "p")
    c = check_vector(config["c"], "c", J)
    if np.any(c < 0):
        raise ValueError("c must be nonnegative")
    sponsored = tuple(sorted(int(j) for j in config.get("sponsored", np.flatnonzero(c > 0))))
    impression = tuple(sorted(int(j) for j in config.get("impression", ())))
    for name, items in (("sponsored", sponsored), ("impression", impression)):
        if any(j < 0 or j >= J for j in items) or len(set(items)) != len(items):
            raise ValueError(f"{name} must hold distinct item indices in [0, {J})")
    if set(np.flatnonzero(c > 0).tolist()) != set(sponsored):
        raise ValueError("c must be positive exactly on the sponsored items")
    item_mask = np.zeros(J)
    item_mask[list(impression)] = 1.0
    d_expected = np.tile(np.repeat(item_mask, K), n)
    if config.get("d") is not None:
        d = check_vector(config["d"], "d", size)
        if not np.array_equal(d, d_expected):
            raise ValueError("d must equal 1 exactly on impression items")
    else:
        d = d_expected
    R = float(config.get("R", 0.0))
    I = float(config.get("I", 0.0))
    gamma = check_positive(float(config.get("gamma", 1.0)), "gamma")
    for arr in (p, c, d):
        arr.setflags(write=False)
    return RankingProblem(n, J, K, p, c, d, R, I, gamma, sponsored, impression)


@dataclass(frozen=True, eq=False)
class LocalPolytope:
    """One user's feasible serving set as ``K_i x <= b_i``.

    Row blocks, in order: ``x <= 1``, ``-x <= 0``, ``B x <= 1``,
    ``-B x <= -1`` (slot sums equal one), ``C x <= 1``, ``-C x <= 0``
    (item sums in [0, 1]).
    """

    n_items: int
    n_slots: int
    matrix: sp.csr_matrix = field(repr=False)
    bound: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.n_items * self.n_slots

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(self.matrix @ np.asarray(x, dtype=float) <= self.bound + tol))

    def slot_sum(self) -> sp.csr_matrix:
        """``B``: K x JK, sums each slot over items."""
        J, K = self.n_items, self.n_slots
        return sp.csr_matrix(sp.hstack([sp.identity(K)] * J))

    def item_sum(self) -> sp.csr_matrix:
        """``C``: J x JK, sums each item over slots."""
        J, K = self.n_items, self.n_slots
        return sp.csr_matrix(sp.kron(sp.identity(J), np.ones((1, K))))


def build_local_polytope(J: int, K: int) -> LocalPolytope:
    """Constraint rows of one user, ``2JK + 2K + 2J`` inequalities."""
    J = check_count(J, "J")
    K = check_count(K, "K")
    if K > J:
        raise ValueError(f"K={K} exceeds J={J}")
    eye = sp.identity(J * K, format="csr")
    B = sp.hstack([sp.identity(K)] * J)
    C = sp.kron(sp.identity(J), np.ones((1, K)))
    Kmat = sp.vstack([eye, -eye, B, -B, C, -C], format="csr")
    Kmat.eliminate_zeros()
    b = np.concatenate([np.ones(J * K), np.zeros(J * K), np.ones(K), -np.ones(K),
                        np.ones(J), np.zeros(J)])
    b.setflags(write=False)
    return LocalPolytope(J, K, Kmat, b)


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """Dual data ``A = ($ : d : -K')``, ``xi = (R, I, -b')'`` and ``M = A'A / gamma``.

    ``M`` is never materialized by the solvers; :meth:`matvec` applies it
    as ``A'(A y) / gamma``. :attr:`M` builds the sparse product on demand.
    """

    A: sp.csr_matrix = field(repr=False)
    xi: np.ndarray = field(repr=False)
    gamma: float
    n_users: int
    local: LocalPolytope

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @cached_property
    def At(self) -> sp.csr_matrix:
        return self.A.T.tocsr()

    @cached_property
    def M(self) -> sp.csr_matrix:
        M = (self.At @ self.A).tocsr() / self.gamma
        M.eliminate_zeros()
        return M

    def matvec(self, y: np.ndarray) -> np.ndarray:
        return self.At @ (self.A @ y) / self.gamma

    def linear_term(self, p: np.ndarray) -> np.ndarray:
        """``q = xi - A'p / gamma``."""
        return self.xi - self.At @ p / self.gamma


def assemble_stacked(problem: RankingProblem) -> StackedSystem:
    local = build_local_polytope(problem.n_items, problem.n_slots)
    Kfull = sp.block_diag([local.matrix] * problem.n_users, format="csr")
    b = np.tile(local.bound, problem.n_users)
    A = sp.hstack([sp.csr_matrix(problem.dollar[:, None]),
                   sp.csr_matrix(problem.d[:, None]),
                   -Kfull.T], format="csr")
    A.eliminate_zeros()
    xi = np.concatenate([[problem.R, problem.I], -b])
    return StackedSystem(A, xi, problem.gamma, problem.n_users, local)


def sparsity_ratio(matrix) -> float:
    """Fraction of nonzero entries; stored zeros do not count."""
    if sp.issparse(matrix):
        m, n = matrix.shape
        if m * n == 0:
            raise ValueError("sparsity ratio of an empty matrix is undefined")
        return matrix.count_nonzero() / (m * n)
    arr = np.asarray(matrix)
    if arr.size == 0:
        raise ValueError("sparsity ratio of an empty matrix is undefined")
    return np.count_nonzero(arr) / arr.size


def closed_form_sparsity(n: int, J: int, K: int, beta: int, overlap: bool = True) -> float:
    """Closed-form nonzero fraction of ``M`` when sponsored and impression sets total ``beta``.

    Equals ``(1 + n(J + beta + K(3 + beta) + 7JK)) / (1 + nJ + nK + nJK)^2``
    under overlap. Disjoint sets lose the two off-diagonal entries of the
    leading 2x2 block.
    """
    side = 2 * (1 + n * J + n * K + n * J * K)
    return closed_form_nonzeros(n, J, K, beta, overlap) / side**2


def closed_form_nonzeros(n: int, J: int, K: int, beta: int, overlap: bool = True) -> int:
    """Integer nonzero count of ``M`` behind :func:`closed_form_sparsity`."""
    count = 4 * (1 + n * (J + beta + K * (3 + beta) + 7 * J * K))
    return count if overlap else count - 2


def random_problem(n: int, J: int, K: int, seed=None, *, n_sponsored: int | None = None,
                   n_impression: int | None = None, gamma: float | None = None,
                   tightness: float | None = None) -> RankingProblem:
    """Random feasible instance with thresholds that may or may not bind.

    Thresholds are placed on the segment between the unconstrained
    optimum and the midpoint of the revenue- and impression-maximizing
    points, at fraction ``tightness`` (uniform in [0, 1] if omitted). The
    point at that fraction certifies feasibility.
    """
    from .recovery import project_local  # local import: recovery depends on this module

    rng = np.random.default_rng(seed)
    ns = n_sponsored if n_sponsored is not None else int(rng.integers(1, J + 1))
    ni = n_impression if n_impression is not None else int(rng.integers(1, J + 1))
    sponsored = sorted(rng.choice(J, size=ns, replace=False).tolist())
    impression = sorted(rng.choice(J, size=ni, replace=False).tolist())
    c = np.zeros(J)
    c[sponsored] = rng.uniform(0.5, 2.0, size=ns)
    p = rng.uniform(0.01, 1.0, size=n * J * K)
    gamma = float(rng.uniform(0.5, 2.0)) if gamma is None else gamma
    theta = float(rng.uniform(0.0, 1.0)) if tightness is None else tightness
    base = build_problem({"n": n, "J": J, "K": K, "p": p, "c": c, "R": 0.0, "I": 0.0,
                          "gamma": gamma, "sponsored": sponsored, "impression": impression})
    local = build_local_polytope(J, K)
    free = np.concatenate([project_local(p[base.user_slice(i)] / gamma, local)
                           for i in range(n)])
    x_rev = _linear_max(base.dollar, n, local)
    x_imp = _linear_max(base.d, n, local)
    target = free + theta * (0.5 * (x_rev + x_imp) - free)
    config = base.to_dict()
    config["R"] = float(base.dollar @ target)
    config["I"] = float(base.d @ target)
    return build_problem(config)


def _linear_max(weights: np.ndarray, n: int, local: LocalPolytope) -> np.ndarray:
    """Per-user maximizer of a linear function over the local polytope."""
    from scipy.optimize import linprog

    size = local.dim
    out = np.empty(n * size)
    A = local.matrix.toarray()
    for i in range(n):
        w = weights[i * size:(i + 1) * size]
        res = linprog(-w, A_ub=A, b_ub=local.bound, bounds=(None, None), method="highs")
        out[i * size:(i + 1) * size] = res.x
    return out
