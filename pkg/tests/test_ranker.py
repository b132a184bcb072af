import numpy as np
import pytest
from sklearn.base import clone

from multislot.oracle import ranking_primal_oracle
from multislot.problem import random_problem
from multislot.ranker import MultiSlotRanker


def test_fit_matches_oracle():
    pr = random_problem(2, 3, 2, seed=4)
    est = MultiSlotRanker().fit(pr)
    oracle = ranking_primal_oracle(pr)
    assert np.abs(est.x_ - oracle.x).max() <= 1e-6
    assert est.objective_ == pytest.approx(oracle.objective, abs=1e-8)
    assert est.dual_.converged


def test_predict_is_seeded_plan():
    est = MultiSlotRanker().fit(random_problem(5, 4, 3, seed=1))
    a, b = est.predict(seed=3), est.predict(seed=3)
    assert a.items.shape == (5, 3)
    np.testing.assert_array_equal(a.items, b.items)


def test_params_and_clone():
    est = MultiSlotRanker(tol=1e-9, method="admm")
    assert clone(est).get_params() == {"tol": 1e-9, "method": "admm", "max_iter": None,
                                       "allow_unconverged": False}
    with pytest.raises(TypeError):
        est.fit(np.zeros(3))


def test_unconverged_needs_flag():
    pr = random_problem(3, 4, 2, seed=1, tightness=0.9)
    with pytest.raises(RuntimeError):
        MultiSlotRanker(max_iter=1).fit(pr)
    with pytest.warns(RuntimeWarning):
        est = MultiSlotRanker(max_iter=1, allow_unconverged=True).fit(pr)
    assert not est.distribution_.from_converged_dual
