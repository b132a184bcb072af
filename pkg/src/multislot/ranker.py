"""Estimator wrapper around the dual solve, primal recovery and plan sampling."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .dual import DualOptions, solve_dual
from .problem import RankingProblem, assemble_stacked
from .recovery import recover_primal, serving_plan

__all__ = ["MultiSlotRanker"]


class MultiSlotRanker(BaseEstimator):
    """Solve a :class:`RankingProblem` and sample serving plans.

    Parameters
    ----------
    tol : float
        Stationarity tolerance of the dual solve.
    method : {"pg", "admm"}
    max_iter : int, optional
    allow_unconverged : bool
        Recover a primal point even if the dual solve stopped early.

    Attributes
    ----------
    dual_ : DualSolution
    distribution_ : ServingDistribution
    x_ : ndarray
        Optimal serving probabilities in the flat layout.
    objective_ : float
    """

    def __init__(self, tol: float = 1e-8, method: str = "pg", max_iter: int | None = None,
                 allow_unconverged: bool = False):
        self.tol = tol
        self.method = method
        self.max_iter = max_iter
        self.allow_unconverged = allow_unconverged

    def fit(self, X: RankingProblem, y=None):
        if not isinstance(X, RankingProblem):
            raise TypeError("fit expects a RankingProblem")
        system = assemble_stacked(X)
        opts = DualOptions(tol=self.tol, max_iter=self.max_iter, method=self.method)
        self.dual_ = solve_dual(system, X.p, X.gamma, opts)
        self.distribution_ = recover_primal(self.dual_, X, allow_unconverged=self.allow_unconverged)
        self.x_ = self.distribution_.x
        self.objective_ = X.objective(self.x_)
        return self

    def predict(self, X=None, seed=0):
        """A sampled serving plan (``X`` is ignored; the fitted problem is used)."""
        return serving_plan(self.distribution_, seed)
