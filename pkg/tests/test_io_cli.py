import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from multislot import io
from multislot.bench import random_qcqp
from multislot.cli import main
from multislot.dual import solve_dual
from multislot.interaction import EllipsoidConstraint, synthetic_block
from multislot.lowdisc import riesz_energy
from multislot.problem import assemble_stacked, random_problem, sparsity_ratio
from multislot.recovery import ServingPlan


@pytest.fixture
def files(tmp_path):
    pr = random_problem(3, 4, 2, seed=0)
    io.save_problem(pr, tmp_path / "problem.json")
    io.write_json(tmp_path / "q.json", synthetic_block(4, 2, 1, a_max=0.9).to_dict())
    E = EllipsoidConstraint(np.array([4.0, 1.0, 2.0]), np.array([0.5, 0.0, -1.0]), 2.0)
    io.write_json(tmp_path / "e.json", E.to_dict())
    io.write_json(tmp_path / "qcqp.json", random_qcqp(4, seed=2).to_dict())
    return tmp_path, pr


def run(capsys, *argv, stderr=False):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    parsed = json.loads(cap.out) if cap.out.strip() else None
    return (code, parsed, cap.err) if stderr else (code, parsed)


def test_problem_and_plan_round_trips(files):
    path, pr = files
    back = io.load_problem(path / "problem.json")
    assert back.p.tobytes() == pr.p.tobytes()
    plan = ServingPlan(np.array([[2, 0], [1, 3]]))
    io.write_plan(plan, path / "plan.csv")
    assert (path / "plan.csv").read_text().splitlines()[:2] == ["user,slot,item", "0,0,2"]
    np.testing.assert_array_equal(io.read_plan(path / "plan.csv").items, plan.items)


def test_dual_round_trip(files):
    path, pr = files
    sol = solve_dual(assemble_stacked(pr), pr.p, pr.gamma)
    io.save_dual(sol, path / "dual.json")
    back = io.load_dual(path / "dual.json")
    assert back.y.tobytes() == sol.y.tobytes()
    assert back.converged == sol.converged


def test_points_round_trip_is_exact(tmp_path):
    pts = np.random.default_rng(0).normal(size=(7, 3))
    io.write_points(pts, tmp_path / "p.csv")
    assert io.read_points(tmp_path / "p.csv").tobytes() == pts.tobytes()
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(ValueError):
        io.read_points(tmp_path / "empty.csv")


def test_qcqp_and_interaction_files(files):
    path, _ = files
    inst = io.load_qcqp(path / "qcqp.json")
    assert np.array_equal(inst.C, random_qcqp(4, seed=2).C)
    model_file = io.load_interaction(path / "q.json")
    assert len(model_file["blocks"]) == 1 and model_file["blocks_r"] is None and model_file["epsilon"] is None


def test_build_check(files, capsys):
    path, pr = files
    code, out = run(capsys, "build", "--in", path / "problem.json", "--check")
    assert code == 0
    assert out["dim"] == pr.dim and out["local_rows"] == 2 * 8 + 2 * 2 + 2 * 4
    assert out["psi"] == pytest.approx(sparsity_ratio(assemble_stacked(pr).M))


def test_dual_then_serve(files, capsys):
    path, pr = files
    code, out = run(capsys, "dual", "--in", path / "problem.json", "--out", path / "dual.json")
    assert code == 0 and out["converged"]
    code, out = run(capsys, "serve", "--in", path / "problem.json", "--dual", path / "dual.json",
                    "--seed", 7, "--plan", path / "plan.csv", "--dist", path / "dist.json")
    assert code == 0
    plan = io.read_plan(path / "plan.csv")
    assert plan.items.shape == (3, 2)
    assert all(len(set(row)) == 2 for row in plan.items.tolist())
    assert len(io.read_json(path / "dist.json")["x"]) == pr.dim


def test_unconverged_dual_exit_code(files, capsys):
    path, _ = files
    code, out = run(capsys, "dual", "--in", path / "problem.json", "--max-iter", 1,
                    "--out", path / "dual.json")
    assert code == 3 and not out["converged"]
    code, _ = run(capsys, "serve", "--in", path / "problem.json", "--dual", path / "dual.json",
                  "--plan", path / "plan.csv")
    assert code == 1
    with pytest.warns(RuntimeWarning):
        code, _ = run(capsys, "serve", "--in", path / "problem.json", "--dual", path / "dual.json",
                      "--plan", path / "plan.csv", "--allow-unconverged")
    assert code == 0


def test_interact_check_pd(files, capsys):
    path, _ = files
    code, out = run(capsys, "interact", "--in", path / "problem.json", "--model", path / "q.json",
                    "--check-pd", "--epsilon", 0.5, "--out", path / "model.json")
    assert code == 0 and out["pd"] and out["users"] == 3
    assert min(out["min_eigenvalue_repaired"]) > 0
    assert io.read_json(path / "model.json") == out


def test_interact_dimension_mismatch(files, capsys):
    path, _ = files
    io.write_json(path / "bad.json", synthetic_block(3, 2, 0).to_dict())
    code, _, err = run(capsys, "interact", "--in", path / "problem.json", "--model",
                       path / "bad.json", stderr=True)
    assert code == 1 and "do not match" in err


def test_points_and_energy(files, capsys):
    path, _ = files
    code, out = run(capsys, "points", "--ellipsoid", path / "e.json", "--n", 64,
                    "--out", path / "pts.csv")
    assert code == 0 and out["max_boundary_residual"] <= 1e-9
    pts = io.read_points(path / "pts.csv")
    assert pts.shape == (64, 3)
    code, out = run(capsys, "energy", "--in", path / "pts.csv", "--exp", 2)
    assert out["energy"] == pytest.approx(riesz_energy(pts, 2), rel=1e-12)


def test_points_rejects_non_power_of_two(files, capsys):
    path, _ = files
    code, _ = run(capsys, "points", "--ellipsoid", path / "e.json", "--n", 10,
                  "--out", path / "pts.csv")
    assert code == 1


def test_qcqp_with_oracle(files, capsys):
    path, _ = files
    code, out = run(capsys, "qcqp", "--in", path / "qcqp.json", "--n", 256, "--oracle", "auto",
                    "--out", path / "report.json")
    assert code == 0
    assert out["objective"] <= out["oracle_objective"] + 1e-8
    report = io.read_json(path / "report.json")
    assert report["certificates"]["relaxation_gap"] >= -1e-8


def test_qcqp_schedule_trace(files, capsys):
    path, _ = files
    code, _ = run(capsys, "qcqp", "--in", path / "qcqp.json", "--schedule", 16, 64, 256,
                  "--oracle", "on", "--out", path / "report.json")
    trace = io.read_json(path / "report.json")["trace"]
    assert code == 0 and [t["N"] for t in trace] == [16, 64, 256]
    assert all("error" in t for t in trace)


def test_qcqp_without_oracle_and_polish(files, capsys):
    path, _ = files
    code, out = run(capsys, "qcqp", "--in", path / "qcqp.json", "--n", 64, "--oracle", "off",
                    "--polish", "--out", path / "report.json")
    assert code == 0 and "oracle_objective" not in out
    assert "polished_objective" in io.read_json(path / "report.json")


def test_bench_command(tmp_path, capsys):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({"dims": [3], "seeds": 1, "n_points": 32}))
    code, out = run(capsys, "bench", "--config", cfg, "--out", tmp_path / "res")
    assert code == 0 and out["traces"] == 3
    assert (tmp_path / "res" / "results.csv").exists()


def test_missing_file_is_an_error(tmp_path, capsys):
    code, _ = run(capsys, "build", "--in", tmp_path / "nope.json")
    assert code == 1


def test_console_script(files):
    path, _ = files
    exe = shutil.which("moo")
    cmd = [exe] if exe else [sys.executable, "-m", "multislot.cli"]
    done = subprocess.run(cmd + ["build", "--in", str(path / "problem.json")],
                          capture_output=True, text=True, check=True)
    assert json.loads(done.stdout)["K"] == 2
