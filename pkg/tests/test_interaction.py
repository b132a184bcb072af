import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from multislot.bench import interaction_instances
from multislot.interaction import (
    EllipsoidConstraint,
    InteractionBlock,
    InteractionModel,
    PDRepair,
    assemble_block,
    build_qcqp,
    dependent_constraint,
    min_eigenvalue,
    repair_pd,
    synthetic_block,
    to_ellipsoid_constraint,
)
from multislot.linearizer import linearize
from multislot.oracle import exact_qcqp
from multislot.problem import build_local_polytope


def random_symmetric(rng, size):
    G = rng.normal(size=(size, size))
    return (G + G.T) / 2


def test_zero_offdiag_gives_diagonal():
    Q = assemble_block([0.5, 0.8], np.zeros((2, 2, 3, 3)))
    np.testing.assert_array_equal(Q, np.diag([0.5] * 3 + [0.8] * 3))
    assert min_eigenvalue(Q) > 0


def test_pattern_for_two_items_two_slots():
    blk = np.array([[0.0, 0.1], [0.1, 0.0]])
    Q = assemble_block([0.5, 0.5], {(0, 1): blk})
    expected = np.array([[0.5, 0, 0, 0.1],
                         [0, 0.5, 0.1, 0],
                         [0, 0.1, 0.5, 0],
                         [0.1, 0, 0, 0.5]])
    np.testing.assert_array_equal(Q, expected)


@given(st.integers(0, 10_000))
def test_random_block_is_bitwise_symmetric(seed):
    rng = np.random.default_rng(seed)
    b = synthetic_block(int(rng.integers(1, 5)), int(rng.integers(1, 4)), rng, a_max=0.9)
    Q = b.matrix()
    assert np.array_equal(Q, Q.T)
    J, K = b.n_items, b.n_slots
    for j in range(J):
        for jp in range(J):
            if j != jp:
                assert np.all(np.diag(Q[j * K:(j + 1) * K, jp * K:(jp + 1) * K]) == 0)


def test_assemble_block_validation():
    bad = np.zeros((2, 2, 2, 2))
    bad[0, 1] = np.eye(2)
    with pytest.raises(ValueError):
        assemble_block([0.5, 0.5], bad)
    with pytest.raises(ValueError):
        assemble_block([0.0, 0.5], np.zeros((2, 2, 2, 2)))
    with pytest.raises(ValueError):
        assemble_block([1.5, 0.5], np.zeros((2, 2, 2, 2)))


def test_block_dict_round_trip():
    b = synthetic_block(3, 2, 4)
    back = InteractionBlock.from_dict(b.to_dict())
    assert np.array_equal(back.matrix(), b.matrix())


def test_repair_closed_form():
    Q, shift = repair_pd(np.array([[1.0, 2.0], [2.0, 1.0]]), 0.5, return_shift=True)
    np.testing.assert_allclose(Q, [[2.5, 2.0], [2.0, 2.5]], atol=1e-12)
    assert shift == pytest.approx(1.5)
    assert min_eigenvalue(Q) == pytest.approx(0.5, abs=1e-12)


def test_identity_unchanged():
    for eps in (1e-3, 2.0):
        assert np.array_equal(repair_pd(np.eye(4), eps), np.eye(4))


def test_singular_psd_is_repaired():
    Q = np.ones((3, 3))  # eigenvalues 0, 0, 3
    out = repair_pd(Q, 0.25)
    assert min_eigenvalue(out) == pytest.approx(0.25, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.01, 5.0))
def test_repair_against_full_eigendecomposition(seed, eps):
    rng = np.random.default_rng(seed)
    Q = random_symmetric(rng, 8)
    old = np.linalg.eigvalsh(Q)[0]
    assert min_eigenvalue(Q) == pytest.approx(old, abs=1e-10)
    out, shift = repair_pd(Q, eps, return_shift=True)
    new = np.linalg.eigvalsh(out)[0]
    assert new >= min(old, eps) - 1e-9
    off = ~np.eye(8, dtype=bool)
    assert np.array_equal(out[off], Q[off])
    if shift > 0:
        assert new >= eps - 1e-9
        assert np.linalg.norm(out - Q) == pytest.approx((-old + eps) * np.sqrt(8), rel=1e-9)


def test_block_diagonal_pd_iff_blocks_pd():
    rng = np.random.default_rng(3)
    pd_blocks = [repair_pd(random_symmetric(rng, 4), 0.1) for _ in range(3)]
    bad = random_symmetric(rng, 4)
    assert min_eigenvalue(bad) < 0
    full_ok = sp.block_diag(pd_blocks).toarray()
    full_bad = sp.block_diag(pd_blocks[:2] + [bad]).toarray()
    assert min_eigenvalue(full_ok) > 0
    assert min_eigenvalue(full_bad) < 0


def test_interaction_model_and_metadata():
    rng = np.random.default_rng(0)
    raw = [synthetic_block(3, 2, rng, a_max=0.8).matrix() for _ in range(3)]
    model = InteractionModel.from_blocks(raw, 2.0, blocks_r=raw)
    for Q, shift in zip(model.blocks_p, model.shifts_p):
        lam = min_eigenvalue(Q)
        assert lam > 0
        if shift > 0:
            assert lam >= 2.0 * (1 - 1e-9)
    meta = model.metadata()
    assert meta["trigger"] == 1e-10 and meta["epsilon"] == 2.0
    assert model.Q_p.shape == (18, 18)
    assert min_eigenvalue(model.Q_p.toarray()) > 0


def test_pd_repair_estimator():
    rng = np.random.default_rng(1)
    blocks = [random_symmetric(rng, 4) for _ in range(2)]
    est = PDRepair(epsilon=0.5).fit(blocks)
    assert est.transform(blocks).shape == (8, 8)
    assert PDRepair(epsilon=0.5).fit_transform(blocks[0]).shape == (4, 4)
    assert np.all(est.min_eigenvalues_ >= 0.5 - 1e-9)
    assert est.get_params() == {"epsilon": 0.5, "trigger": 1e-10}


def test_ellipsoid_constraint_examples():
    E = to_ellipsoid_constraint(np.eye(2), 4.0)
    assert E.radius_sq == 4.0 and np.all(E.center == 0)
    E = to_ellipsoid_constraint(np.eye(2), 0.0, np.array([1.0, 0.0]))
    assert E.radius_sq == 1.0
    with pytest.raises(ValueError):
        to_ellipsoid_constraint(np.eye(2), -1.0)


def test_linear_form_membership_matches_ellipsoid():
    rng = np.random.default_rng(7)
    G = rng.normal(size=(4, 4))
    Q_r = G @ G.T + np.eye(4)
    c_r = rng.normal(size=4)
    P = 3.0
    E = to_ellipsoid_constraint(Q_r, P, c_r)
    X = rng.normal(0, 2, size=(10_000, 4))
    r = X @ Q_r - 2 * (Q_r @ c_r)
    direct = np.einsum("ij,ij->i", X, r) <= P
    assert np.array_equal(direct, E.contains(X, tol=0.0))
    assert 0.05 < direct.mean() < 0.95


@pytest.mark.parametrize("scale,shifted", [(1.0, False), (2.5, False), (0.7, True), (1.0, True)])
def test_dependent_parameter_equivalence(scale, shifted):
    rng = np.random.default_rng(11)
    Q_p = repair_pd(synthetic_block(3, 2, rng).matrix(), 0.5)
    shift = rng.normal(size=6) if shifted else None
    E, f = dependent_constraint(Q_p, 2.0, scale, shift)
    X = rng.normal(0, 1.5, size=(5_000, 6))
    original = np.array([x @ f(-Q_p @ x) for x in X]) <= 2.0
    assert np.array_equal(original, E.contains(X, tol=0.0))


def test_build_qcqp_identity_case():
    model = InteractionModel.from_blocks([np.eye(2)], 2.0)
    inst = build_qcqp(model, 1.0, 2.0)
    np.testing.assert_array_equal(inst.A, 2 * np.eye(2))
    assert inst.ellipsoid.radius_sq == 1.0


def test_build_qcqp_zero_offdiag_minimizer_is_origin():
    raw = [assemble_block([0.4, 0.9], np.zeros((2, 2, 2, 2)))]
    inst = build_qcqp(InteractionModel.from_blocks(raw, 2.0), 1.0, 1.0)
    sol = exact_qcqp(inst)
    np.testing.assert_allclose(sol.x, 0.0, atol=1e-12)


def test_build_qcqp_with_local_polytope():
    rng = np.random.default_rng(2)
    raw = [synthetic_block(3, 2, rng).matrix() for _ in range(2)]
    model = InteractionModel.from_blocks(raw, 2.0)
    local = build_local_polytope(3, 2)
    inst = build_qcqp(model, 50.0, 1.0, local=local)
    assert inst.C.shape == (2 * local.n_rows, 12)
    sol = exact_qcqp(inst)
    for i in range(2):
        assert local.contains(sol.x[6 * i:6 * (i + 1)], 1e-8)


def test_simulated_instance_feasibility_agrees_across_modules():
    truth, _ = interaction_instances(5, seed=0)
    centre = exact_qcqp(truth).x
    lin = linearize(truth, 256, require_bounded_cover=False)
    rng = np.random.default_rng(0)
    J, K = 5, 3
    # points on the slot simplices, so only the quadratic constraint decides
    D = rng.dirichlet(np.full(J, 0.5), size=(1000, K)).transpose(0, 2, 1).reshape(1000, J * K)
    X = centre + rng.uniform(0, 0.3, size=(1000, 1)) * (D - centre)
    E = truth.ellipsoid
    verdicts = []
    for x in X:
        direct = bool(x @ E.B @ x <= E.radius_sq * (1 + 1e-9)
                      and np.all(truth.C @ x <= truth.c + 1e-9)
                      and np.all(np.abs(truth.Ceq @ x - truth.ceq) <= 1e-9))
        assert truth.in_U(x) == direct
        if direct:
            assert np.all(lin.contains(x, 1e-9))
        verdicts.append(direct)
    assert 0 < np.mean(verdicts) < 1


def test_ellipsoid_serialization_and_condition():
    E = EllipsoidConstraint(np.array([4.0, 1.0]), np.zeros(2), 1.0)
    assert E.condition() == pytest.approx(4.0)
    back = EllipsoidConstraint.from_dict(E.to_dict())
    assert back.is_diagonal and np.array_equal(back.B, E.B)
