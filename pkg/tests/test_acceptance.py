"""Acceptance suite: one PASS/FAIL line per criterion.

Each test records its verdict through the ``acceptance`` fixture before
asserting, so the summary lists every criterion even when one fails.
Runtime bars are part of each verdict.
"""

import math
import time
from itertools import product

import numpy as np
import pytest

from multislot.bench import ignore_interaction_experiment, interaction_instances, sampler_comparison
from multislot.dual import DualOptions, solve_dual
from multislot.interaction import EllipsoidConstraint, repair_pd, synthetic_block
from multislot.linearizer import QcqpInstance, certify_cover, linearize, refine, solve_qp
from multislot.lowdisc import (
    cap_discrepancy,
    digital_net,
    ellipsoid_image,
    ellipsoid_preimage,
    generate_boundary_points,
    uniform_sphere,
)
from multislot.oracle import exact_qcqp, ranking_primal_oracle
from multislot.problem import assemble_stacked, build_problem, random_problem, sparsity_ratio
from multislot.recovery import ServingDistribution, marginal_distortion, recover_primal, serving_plan

DISK_CENTER = np.array([2 * np.cos(1.0), 2 * np.sin(1.0)])


def disk_instance():
    return QcqpInstance(np.eye(2), DISK_CENTER, EllipsoidConstraint(np.eye(2), np.zeros(2), 1.0))


@pytest.fixture(scope="module")
def sampler_runs():
    start = time.perf_counter()
    res = sampler_comparison([5, 10, 20], range(20))
    return res, time.perf_counter() - start


# ---------------------------------------------------------------- criterion 1

def test_c01_sparsity_law(acceptance):
    start = time.perf_counter()
    beta = 2
    mismatches = []
    checked = 0
    for n, J, K in product((1, 2, 4), (2, 3, 5), (1, 2, 3)):
        if K > J:
            continue  # no feasible slate fills more slots than there are items
        checked += 1
        rng = np.random.default_rng(n * 100 + J * 10 + K)
        c = np.zeros(J)
        c[0] = 1.0
        pr = build_problem({"n": n, "J": J, "K": K, "p": rng.uniform(0.05, 1, n * J * K), "c": c,
                            "R": 0.0, "I": 0.0, "sponsored": [0], "impression": [0]})
        M = assemble_stacked(pr).M
        counted = M.count_nonzero()
        closed = 4 * (1 + n * (J + beta + K * (3 + beta) + 7 * J * K))
        side = 1 + n * J + n * K + n * J * K
        psi_closed = (1 + n * (J + beta + K * (3 + beta) + 7 * J * K)) / side ** 2
        if counted != closed or abs(sparsity_ratio(M) - psi_closed) > 1e-15:
            mismatches.append((n, J, K, counted, closed))
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 10
    acceptance(1, ok, f"{checked} grid points with K <= J, {len(mismatches)} count mismatches, {elapsed:.1f}s")
    assert ok, mismatches


# ---------------------------------------------------------------- criterion 2

def test_c02_dual_primal_round_trip(acceptance):
    start = time.perf_counter()
    worst_x = worst_gap = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, J = int(rng.integers(1, 5)), int(rng.integers(2, 5))
        K = int(rng.integers(1, min(J, 2) + 1))
        pr = random_problem(n, J, K, seed=seed)
        sol = solve_dual(assemble_stacked(pr), pr.p, pr.gamma, DualOptions())
        x = recover_primal(sol, pr).x
        oracle = ranking_primal_oracle(pr)
        worst_x = max(worst_x, float(np.abs(x - oracle.x).max()))
        worst_gap = max(worst_gap, abs(pr.objective(x) - oracle.objective))
    elapsed = time.perf_counter() - start
    ok = worst_x <= 1e-6 and worst_gap <= 1e-8 and elapsed < 60
    acceptance(2, ok, f"50 instances, max coord err {worst_x:.1e}, max gap {worst_gap:.1e}, "
                      f"{elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 3

def test_c03_serving_plan_law(acceptance):
    start = time.perf_counter()
    draws = 100_000
    pr = random_problem(1, 3, 1, seed=0)
    x = recover_primal(solve_dual(assemble_stacked(pr), pr.p, pr.gamma), pr).x
    plan = serving_plan(ServingDistribution(np.tile(x, draws), draws, 3, 1), seed=1)
    freq = np.bincount(plan.items[:, 0], minlength=3) / draws
    tv = 0.5 * float(np.abs(freq - x).sum())

    pr2 = random_problem(1, 3, 2, seed=0)
    x2 = recover_primal(solve_dual(assemble_stacked(pr2), pr2.p, pr2.gamma), pr2).x
    distortion = marginal_distortion(ServingDistribution(x2, 1, 3, 2))
    elapsed = time.perf_counter() - start
    ok = tv <= 0.01 and elapsed < 30
    acceptance(3, ok, f"K=1 TV {tv:.4f} over 1e5 draws; K=2 slot distortion "
                      f"{np.array2string(distortion, precision=4)} (reported), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 4

def test_c04_pd_repair(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    eps = 0.5
    bad = fired = 0
    for trial in range(100):
        while True:
            J, K = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            if J * K <= 16:
                break
        if trial % 2:
            Q = synthetic_block(J, K, rng, a_max=0.9).matrix()
        else:
            G = rng.normal(size=(J * K, J * K))
            Q = (G + G.T) / 2
        out, shift = repair_pd(Q, eps, return_shift=True)
        lam = np.linalg.eigvalsh(out)[0]
        off = ~np.eye(J * K, dtype=bool)
        if shift > 0:
            fired += 1
            bad += lam < eps - 1e-9
        else:
            bad += not (lam > 0 and np.array_equal(out, Q))
        bad += not np.array_equal(out[off], Q[off])
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 10
    acceptance(4, ok, f"100 blocks (repair fired on {fired}), {bad} violations, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 5

def elementary_boxes_ok(points, m, t):
    """Count points in every base-2 elementary box of volume 2**(t - m)."""
    s = points.shape[1]
    for ks in product(range(m - t + 1), repeat=s):
        if sum(ks) != m - t:
            continue
        counts = {}
        for p in points:
            key = tuple(math.floor(v * 2 ** k) for v, k in zip(p, ks))
            counts[key] = counts.get(key, 0) + 1
        if len(counts) != 2 ** (m - t) or set(counts.values()) != {2 ** t}:
            return False
    return True


def test_c05_net_property(acceptance):
    start = time.perf_counter()
    cases = [(4, 2, "sobol"), (6, 2, "sobol"), (4, 3, "hammersley")]
    details = []
    ok = True
    for m, s, construction in cases:
        net = digital_net(m, s, construction=construction)
        t = net.provenance["t"][-1]
        passed = t == 0 and elementary_boxes_ok(net.points, m, 0)
        ok &= passed
        details.append(f"({m},{s}) {construction} t={t} {'ok' if passed else 'FAIL'}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 30
    acceptance(5, ok, "; ".join(details) + f", {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 6

def test_c06_measure_preservation(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    G = rng.normal(size=(3, 3))
    E = EllipsoidConstraint(G @ G.T + 0.5 * np.eye(3), rng.normal(size=3), float(rng.uniform(0.5, 3)))
    pts = generate_boundary_points(E, 2 ** 10)
    on_boundary = np.abs(E.value(pts.points) - E.radius_sq).max() / E.radius_sq
    worst = float(cap_discrepancy(ellipsoid_preimage(pts.points, E), 200, rng).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 0.05 and on_boundary <= 1e-9 and elapsed < 30
    acceptance(6, ok, f"max cap discrepancy {worst:.4f} over 200 caps, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 7

def test_c07_linearizer_convergence(acceptance):
    start = time.perf_counter()
    inst = disk_instance()
    err = {N: abs(solve_qp(linearize(inst, N)).objective - 1.0) for N in (16, 256)}
    rep = refine(inst, [4, 8, 16, 32, 64, 128, 256])
    objs = [t["objective"] for t in rep.trace]
    monotone = all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))
    elapsed = time.perf_counter() - start
    ok = err[256] <= 0.02 and err[256] < err[16] and monotone and elapsed < 30
    acceptance(7, ok, f"|f - 1| = {err[16]:.2e} at N=16, {err[256]:.2e} at N=256; nested "
                      f"objectives {'monotone' if monotone else 'NOT monotone'}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 8

def test_c08_relaxation_bound(acceptance, sampler_runs):
    res, _ = sampler_runs
    worst = -math.inf
    count = 0
    for r in res:
        worst = max(worst, r.objective - r.reference_objective)
        count += 1
    inst = disk_instance()
    worst = max(worst, solve_qp(linearize(inst, 256)).objective - exact_qcqp(inst).objective)
    count += 1
    for n in (5, 10):
        for seed in range(10):
            truth, _ = interaction_instances(n, seed)
            f_N = solve_qp(linearize(truth, 1024, require_bounded_cover=False)).objective
            worst = max(worst, f_N - exact_qcqp(truth).objective)
            count += 1
    ok = worst <= 1e-8
    acceptance(8, ok, f"{count} oracle-paired solves, max f(x(N)) - f* = {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- criterion 9

def test_c09_sampler_ordering(acceptance, sampler_runs):
    res, elapsed = sampler_runs
    parts = []
    ok = elapsed < 600
    for n in (5, 10, 20):
        med = {m: float(np.median([r.error for r in res if r.dim == n and r.method == m]))
               for m in ("net", "cube", "sphere")}
        ok &= med["net"] <= med["cube"] and med["net"] <= med["sphere"]
        parts.append(f"n={n} net {med['net']:.4f} cube {med['cube']:.4f} "
                     f"sphere {med['sphere']:.4f}")
    acceptance(9, ok, "; ".join(parts) + f", {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 10

def test_c10_interaction_necessity(acceptance):
    start = time.perf_counter()
    dims = [5, 10, 20, 50]
    res = ignore_interaction_experiment(dims, range(20))
    med = [float(np.median([r.error for r in res if r.dim == n])) for n in dims]
    elapsed = time.perf_counter() - start
    ok = min(med) > 0 and all(b >= a for a, b in zip(med, med[1:])) and elapsed < 600
    acceptance(10, ok, "median err " + ", ".join(f"n={n}: {v:.2e}" for n, v in zip(dims, med))
               + f", {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- criterion 11

def regular_simplex(s, rng):
    V = np.eye(s + 1) - 1.0 / (s + 1)
    P = V @ np.linalg.svd(V)[2][:s].T
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    Q, _ = np.linalg.qr(rng.normal(size=(s, s)))
    return P @ Q


def test_c11_cover_gate(acceptance):
    start = time.perf_counter()
    wrong = 0
    for s in (2, 3, 5):
        rng = np.random.default_rng(s)
        for _ in range(50):
            G = rng.normal(size=(s, s))
            E = EllipsoidConstraint(G @ G.T + 0.2 * np.eye(s), rng.normal(size=s),
                                    float(rng.uniform(0.5, 2)))
            k = int(rng.integers(1, s + 1))
            few = ellipsoid_image(uniform_sphere(k, s, rng), E)
            simplex = ellipsoid_image(regular_simplex(s, rng), E)
            wrong += certify_cover(few, E).bounded
            wrong += not certify_cover(simplex, E).bounded
    elapsed = time.perf_counter() - start
    ok = wrong == 0 and elapsed < 30
    acceptance(11, ok, f"s in {{2,3,5}} x 50 trials, {wrong} wrong verdicts, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- criterion 12

def test_c12_scale_smoke(acceptance):
    start = time.perf_counter()
    s = 100_000
    rng = np.random.default_rng(0)
    A = rng.uniform(1, 2, s)
    B = rng.uniform(1, 2, s)
    a = rng.normal(size=s)
    a *= 3 * np.sqrt(s) / np.sqrt(a @ (B * a))  # well outside the unit ellipsoid
    inst = QcqpInstance(A, a, EllipsoidConstraint(B, np.zeros(s), 1.0))
    lin = linearize(inst, 1024, "sphere", seed=0, require_bounded_cover=False)
    rep = solve_qp(lin, method="dual", tol=1e-9)
    active = int(np.sum(lin.normals @ rep.x - lin.rhs > -1e-9 * np.abs(lin.rhs)))
    elapsed = time.perf_counter() - start
    ok = rep.converged and rep.kkt_max <= 1e-6 and elapsed < 1800
    acceptance(12, ok, f"10^5 variables, 1024 tangent rows ({active} active), KKT max "
                       f"{rep.kkt_max:.1e}, {elapsed:.0f}s")
    assert ok
