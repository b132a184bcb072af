"""Constrained multi-slot ranking and tangent-plane QCQP approximation."""

from ._validation import InfeasibleError, NotConvexError
from .bench import ignore_interaction_experiment, random_qcqp, run_suite, sampler_comparison
from .dual import DualOptions, DualProblem, DualSolution, dual_objective, solve_dual, solve_nonneg_qp
from .interaction import (
    EllipsoidConstraint,
    InteractionBlock,
    InteractionModel,
    PDRepair,
    assemble_block,
    build_qcqp,
    repair_pd,
    to_ellipsoid_constraint,
)
from .linearizer import (
    LinearizedQp,
    QcqpInstance,
    SolveReport,
    TangentPlaneQCQP,
    certificate_checks,
    certify_cover,
    linearize,
    refine,
    solve_qp,
)
from .lowdisc import (
    PointSet,
    digital_net,
    generate_boundary_points,
    map_to_ellipsoid,
    map_to_sphere,
    riesz_energy,
)
from .oracle import OracleSolution, exact_qcqp
from .problem import (
    LocalPolytope,
    RankingProblem,
    StackedSystem,
    assemble_stacked,
    build_local_polytope,
    build_problem,
    sparsity_ratio,
)
from .ranker import MultiSlotRanker
from .recovery import ServingDistribution, ServingPlan, project_local, recover_primal, serving_plan

__version__ = "0.1.0"

__all__ = [
    "InfeasibleError",
    "NotConvexError",
    "ignore_interaction_experiment",
    "random_qcqp",
    "run_suite",
    "sampler_comparison",
    "DualOptions",
    "DualProblem",
    "DualSolution",
    "dual_objective",
    "solve_dual",
    "solve_nonneg_qp",
    "EllipsoidConstraint",
    "InteractionBlock",
    "InteractionModel",
    "PDRepair",
    "assemble_block",
    "build_qcqp",
    "repair_pd",
    "to_ellipsoid_constraint",
    "LinearizedQp",
    "QcqpInstance",
    "SolveReport",
    "TangentPlaneQCQP",
    "certificate_checks",
    "certify_cover",
    "linearize",
    "refine",
    "solve_qp",
    "PointSet",
    "digital_net",
    "generate_boundary_points",
    "map_to_ellipsoid",
    "map_to_sphere",
    "riesz_energy",
    "OracleSolution",
    "exact_qcqp",
    "LocalPolytope",
    "RankingProblem",
    "StackedSystem",
    "assemble_stacked",
    "build_local_polytope",
    "build_problem",
    "sparsity_ratio",
    "MultiSlotRanker",
    "ServingDistribution",
    "ServingPlan",
    "project_local",
    "recover_primal",
    "serving_plan",
    "__version__",
]
