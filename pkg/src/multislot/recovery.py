"""Primal serving probabilities from dual multipliers, and sampled serving plans."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .activeset import solve_qp
from .problem import LocalPolytope, RankingProblem, build_local_polytope

__all__ = [
    "RESAMPLE_CAP",
    "ServingDistribution",
    "ServingPlan",
    "project_local",
    "recover_primal",
    "serving_plan",
    "slot_marginals",
    "marginal_distortion",
]

logger = logging.getLogger(__name__)

RESAMPLE_CAP = 100


@dataclass(frozen=True, eq=False)
class ServingDistribution:
    """Serving probabilities ``x[i, j, k]`` stored flat (user, item, slot)."""

    x: np.ndarray
    n_users: int
    n_items: int
    n_slots: int
    kkt: float = 0.0
    from_converged_dual: bool = True

    def as_array(self) -> np.ndarray:
        return self.x.reshape(self.n_users, self.n_items, self.n_slots)

    def validate(self, tol: float = 1e-6) -> None:
        x = self.as_array()
        if x.min() < -tol or x.max() > 1 + tol:
            raise ValueError("serving probabilities outside [0, 1]")
        if np.abs(x.sum(axis=1) - 1).max() > tol:
            raise ValueError("slot probabilities do not sum to one")
        if x.sum(axis=2).max() > 1 + tol:
            raise ValueError("an item is served with total probability above one")


@dataclass(frozen=True, eq=False)
class ServingPlan:
    """``items[i, k]`` is the item shown to user ``i`` in slot ``k``."""

    items: np.ndarray
    fallback_users: tuple = field(default=())

    def rows(self):
        for i, row in enumerate(self.items):
            for k, j in enumerate(row):
                yield i, k, int(j)


def project_local(point, polytope: LocalPolytope, return_certificate: bool = False):
    """Euclidean projection of ``point`` onto one user's serving polytope.

    Slot sums enter as equalities; the item-sum lower bound is implied by
    nonnegativity and is dropped.
    """
    z = np.asarray(point, dtype=float)
    if z.shape != (polytope.dim,):
        raise ValueError(f"point must have length {polytope.dim}")
    eye = np.eye(polytope.dim)
    G = np.vstack([eye, -eye, polytope.item_sum().toarray()])
    h = np.concatenate([np.ones(polytope.dim), np.zeros(polytope.dim),
                        np.ones(polytope.n_items)])
    res = solve_qp(np.ones(polytope.dim), -z, G, h,
                   polytope.slot_sum().toarray(), np.ones(polytope.n_slots))
    if return_certificate:
        return res.x, res.kkt
    return res.x


def recover_primal(dual, problem: RankingProblem, *, allow_unconverged: bool = False,
                   kkt_tol: float = 1e-9) -> ServingDistribution:
    """Project ``(mu0 $ + mu1 d + p) / gamma`` onto every user's polytope.

    Raises if the dual run did not converge, unless ``allow_unconverged``
    is set, in which case a warning is emitted and the result is flagged.
    """
    if not dual.converged:
        if not allow_unconverged:
            raise RuntimeError("dual solve did not converge; pass allow_unconverged=True "
                               "to recover anyway")
        warnings.warn("recovering primal from a non-converged dual solution", RuntimeWarning)
    target = (dual.mu0 * problem.dollar + dual.mu1 * problem.d + problem.p) / problem.gamma
    local = build_local_polytope(problem.n_items, problem.n_slots)
    x = np.empty(problem.dim)
    worst = 0.0
    for i in range(problem.n_users):
        sl = problem.user_slice(i)
        x[sl], kkt = project_local(target[sl], local, return_certificate=True)
        worst = max(worst, max(kkt.values()))
    if worst > kkt_tol:
        raise RuntimeError(f"local projection KKT residual {worst:.2e} exceeds {kkt_tol:.0e}")
    return ServingDistribution(x, problem.n_users, problem.n_items, problem.n_slots,
                               kkt=worst, from_converged_dual=bool(dual.converged))


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    cdf = np.cumsum(probs)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(j, probs.shape[0] - 1)


def serving_plan(dist: ServingDistribution, seed=0) -> ServingPlan:
    """Sample a duplicate-free slate per user, slot by slot.

    Each user draws from its own stream seeded by ``(seed, i)``. A draw
    that repeats an item already placed is redrawn from the same slot
    distribution, up to ``RESAMPLE_CAP`` times; after that the slot
    distribution is renormalized over unused items (uniform if they carry
    no mass) and the user is listed in ``fallback_users``.
    """
    x = np.clip(dist.as_array(), 0.0, None)
    n, J, K = x.shape
    items = np.empty((n, K), dtype=int)
    fallback = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        used = np.zeros(J, dtype=bool)
        for k in range(K):
            probs = x[i, :, k]
            total = probs.sum()
            j = -1
            if total > 0:
                for _ in range(RESAMPLE_CAP):
                    cand = _draw(rng, probs)
                    if not used[cand]:
                        j = cand
                        break
            if j < 0:
                free = np.where(used, 0.0, probs)
                if free.sum() <= 0:
                    free = (~used).astype(float)
                j = _draw(rng, free)
                fallback.append(i)
            used[j] = True
            items[i, k] = j
    if fallback:
        logger.info("resample cap hit for %d users", len(set(fallback)))
    return ServingPlan(items, tuple(sorted(set(fallback))))


def slot_marginals(dist: ServingDistribution, user: int = 0) -> np.ndarray:
    """Exact per-slot item marginals of the repeat-free sampling scheme.

    Redrawing on a repeat is the same as drawing from the slot
    distribution conditioned on unused items, so the law of a slate is a
    product of conditionals. Enumerates all partial slates; meant for
    small ``J`` and ``K``. Returns a ``(J, K)`` array.
    """
    x = np.clip(dist.as_array()[user], 0.0, None)
    J, K = x.shape
    marg = np.zeros((J, K))

    def walk(k, used, prob):
        if k == K or prob == 0.0:
            return
        w = np.where(used, 0.0, x[:, k])
        total = w.sum()
        if total <= 0:
            w = (~used).astype(float)
            total = w.sum()
        for j in np.flatnonzero(w):
            pj = prob * w[j] / total
            marg[j, k] += pj
            used[j] = True
            walk(k + 1, used, pj)
            used[j] = False

    walk(0, np.zeros(J, dtype=bool), 1.0)
    return marg


def marginal_distortion(dist: ServingDistribution, user: int = 0) -> np.ndarray:
    """Total-variation distance per slot between realized and optimal marginals."""
    x = np.clip(dist.as_array()[user], 0.0, None)
    return 0.5 * np.abs(slot_marginals(dist, user) - x).sum(axis=0)
