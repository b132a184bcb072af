"""``moo`` command-line interface."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io
from .bench import run_suite
from .dual import DualOptions, solve_dual
from .interaction import InteractionModel, min_eigenvalue
from .linearizer import certificate_checks, linearize, refine, solve_qp
from .lowdisc import SAMPLERS, generate_boundary_points, riesz_energy
from .oracle import MAX_ORACLE_DIM, exact_qcqp
from .problem import assemble_stacked, build_local_polytope, sparsity_ratio
from .recovery import recover_primal, serving_plan

logger = logging.getLogger("multislot")


def _emit(data: dict) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, default=io._plain))


def cmd_build(args) -> int:
    problem = io.load_problem(args.input)
    out = {"n": problem.n_users, "J": problem.n_items, "K": problem.n_slots, "dim": problem.dim}
    if args.check:
        local = build_local_polytope(problem.n_items, problem.n_slots)
        sys_ = assemble_stacked(problem)
        M = sys_.M
        out.update({
            "local_rows": local.n_rows,
            "A_shape": list(sys_.shape),
            "M_shape": list(M.shape),
            "M_nonzeros": int(M.count_nonzero()),
            "psi": sparsity_ratio(M),
        })
    _emit(out)
    return 0


def cmd_dual(args) -> int:
    problem = io.load_problem(args.input)
    sys_ = assemble_stacked(problem)
    opts = DualOptions(tol=args.tol, max_iter=args.max_iter, method=args.method)
    sol = solve_dual(sys_, problem.p, problem.gamma, opts)
    if args.out:
        io.save_dual(sol, args.out)
    summary = sol.to_dict()
    summary.pop("eta")
    _emit(summary)
    return 0 if sol.converged else 3


def cmd_serve(args) -> int:
    problem = io.load_problem(args.input)
    dual = io.load_dual(args.dual)
    dist = recover_primal(dual, problem, allow_unconverged=args.allow_unconverged)
    plan = serving_plan(dist, args.seed)
    io.write_plan(plan, args.plan)
    if args.dist:
        io.write_json(args.dist, {"x": dist.x.tolist(), "kkt": dist.kkt,
                                  "from_converged_dual": dist.from_converged_dual})
    _emit({"users": problem.n_users, "plan": str(args.plan), "objective": problem.objective(dist.x),
           "fallback_users": list(plan.fallback_users), "projection_kkt": dist.kkt})
    return 0


def cmd_interact(args) -> int:
    problem = io.load_problem(args.input)
    model_file = io.load_interaction(args.model)
    blocks = model_file["blocks"]
    for b in blocks + (model_file["blocks_r"] or []):
        if (b.n_items, b.n_slots) != (problem.n_items, problem.n_slots):
            raise ValueError("interaction block dimensions do not match the problem")
    if len(blocks) == 1:
        blocks = blocks * problem.n_users
    elif len(blocks) != problem.n_users:
        raise ValueError(f"expected 1 or {problem.n_users} blocks, got {len(blocks)}")
    blocks_r = model_file["blocks_r"]
    if blocks_r is not None and len(blocks_r) == 1:
        blocks_r = blocks_r * problem.n_users
    eps = args.epsilon if args.epsilon is not None else (model_file["epsilon"] or 2.0)
    raw = [b.matrix() for b in blocks]
    model = InteractionModel.from_blocks(raw, eps, None if blocks_r is None else
                                         [b.matrix() for b in blocks_r])
    out = {"users": model.n_users, "block_size": problem.n_items * problem.n_slots,
           **model.metadata()}
    if args.check_pd:
        out["min_eigenvalue_raw"] = [min_eigenvalue(Q) for Q in raw]
        out["min_eigenvalue_repaired"] = [min_eigenvalue(Q) for Q in model.blocks_p]
        out["pd"] = bool(min(out["min_eigenvalue_repaired"]) > 0)
    if args.out:
        io.write_json(args.out, out)
    _emit(out)
    return 0


def cmd_points(args) -> int:
    E = io.load_ellipsoid(args.ellipsoid)
    pts = generate_boundary_points(E, args.n, sampler=args.sampler, seed=args.seed)
    io.write_points(pts.points, args.out)
    rel = np.abs(E.value(pts.points) - E.radius_sq) / E.radius_sq
    _emit({"n": len(pts), "dim": pts.dim, "sampler": args.sampler, "out": str(args.out),
           "max_boundary_residual": float(rel.max())})
    return 0


def cmd_energy(args) -> int:
    pts = io.read_points(args.input)
    _emit({"n": int(pts.shape[0]), "exponent": args.exp, "energy": riesz_energy(pts, args.exp)})
    return 0


def cmd_qcqp(args) -> int:
    inst = io.load_qcqp(args.input)
    use_oracle = args.oracle == "on" or (args.oracle == "auto" and inst.dim <= MAX_ORACLE_DIM)
    oracle = exact_qcqp(inst, max_dim=max(inst.dim, MAX_ORACLE_DIM)) if use_oracle else None
    if args.schedule:
        schedule = sorted(set(args.schedule) | ({args.n} if args.n else set()))
        report = refine(inst, schedule, sampler=args.sampler, seed=args.seed, reference=oracle,
                        method=args.method)
    else:
        lin = linearize(inst, args.n, args.sampler, seed=args.seed,
                        require_bounded_cover=not inst.has_linear_rows)
        report = solve_qp(lin, method=args.method, polish=args.polish)
    out = report.to_dict()
    if oracle is not None:
        out["oracle"] = {"objective": oracle.objective, "x": oracle.x.tolist(), "kkt": oracle.kkt}
        out["relative_error"] = float(np.linalg.norm(report.x - oracle.x)
                                      / max(np.linalg.norm(oracle.x), 1e-300))
        out["certificates"] = certificate_checks(report, inst, oracle)
    if args.out:
        io.write_json(args.out, out)
    brief = {k: out[k] for k in ("objective", "n_points", "violation", "in_S", "method", "wall_time")}
    if oracle is not None:
        brief["oracle_objective"] = oracle.objective
        brief["relative_error"] = out["relative_error"]
    _emit(brief)
    return 0


def cmd_bench(args) -> int:
    paths = run_suite(args.config, args.out)
    _emit({k: str(v) for k, v in paths.items() if not k.startswith("trace_")}
          | {"traces": sum(k.startswith("trace_") for k in paths)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moo", description="Constrained multi-slot ranking tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="validate a problem file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--check", action="store_true", help="assemble the dual system and report sparsity")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("dual", help="solve the dual QP")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--method", choices=["pg", "admm"], default="pg")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_dual)

    p = sub.add_parser("serve", help="recover serving probabilities and sample a plan")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dual", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plan", required=True)
    p.add_argument("--dist", default=None, help="also write the serving probabilities")
    p.add_argument("--allow-unconverged", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("interact", help="assemble and repair interaction blocks")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--check-pd", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_interact)

    p = sub.add_parser("points", help="boundary points of an ellipsoid")
    p.add_argument("--ellipsoid", required=True)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--sampler", choices=SAMPLERS, default="net")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_points)

    p = sub.add_parser("energy", help="Riesz energy of a point file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--exp", type=float, default=1.0)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("qcqp", help="solve a QCQP by tangent-plane linearization")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--n", type=int, default=None, help="tangent points (default max(1024, 2^m))")
    p.add_argument("--sampler", choices=SAMPLERS, default="net")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--schedule", type=int, nargs="+", default=None, help="nested refinement counts")
    p.add_argument("--method", choices=["auto", "activeset", "dual"], default="auto")
    p.add_argument("--oracle", choices=["auto", "on", "off"], default="auto")
    p.add_argument("--polish", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_qcqp)

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"moo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
