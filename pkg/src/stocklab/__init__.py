"""Inventory policy learning lab: simulation, fitting, and generalization experiments."""

__version__ = "0.1.0"

from .core import (
    BaseStock,
    BudgetError,
    Dataset,
    DemandSequence,
    NonStationary,
    Policy,
    ReorderSchedule,
    SsPolicy,
    SystemParams,
    Trajectory,
    base_stock_loss,
    delta_breakpoints,
    read_demands_csv,
    reorder_schedule,
    simulate,
    write_demands_csv,
)
from .demand import (
    CorrelatedNormalSupport,
    DemandModel,
    Deterministic,
    FiniteSupport,
    IIDNormal,
    IndependentNormals,
    InstanceHyper,
    draw,
    marginal_pmfs,
    sample_instance,
)
from .estimators import ge_estimate, rademacher_estimate
from .evaluate import dataset_risk, exact_risk, finite_support_risk, mc_risk, model_risk
from .experiments import ExperimentConfig, MetricsRecord, run_experiment
from .emit import emit_results
from .fitters import (
    FitResult,
    StOptions,
    erm_St,
    erm_base_stock,
    erm_eoq_base_stock,
    erm_sS,
    grid_oracle,
)
from .perm import (
    EmpiricalMarginals,
    build_marginals,
    optimal_dp,
    perm_fit,
    perm_risk,
    perm_risk_mc,
    product_partition,
)
from .shatter import (
    ShatterInstance,
    discretization_gap,
    gen_sS_prime_shatter,
    gen_st_K_shatter,
    gen_st_shatter,
    verify_shattering,
)

__all__ = [
    "BaseStock",
    "BudgetError",
    "CorrelatedNormalSupport",
    "Dataset",
    "DemandModel",
    "DemandSequence",
    "Deterministic",
    "EmpiricalMarginals",
    "ExperimentConfig",
    "FiniteSupport",
    "FitResult",
    "IIDNormal",
    "IndependentNormals",
    "InstanceHyper",
    "MetricsRecord",
    "NonStationary",
    "Policy",
    "ReorderSchedule",
    "ShatterInstance",
    "SsPolicy",
    "StOptions",
    "SystemParams",
    "Trajectory",
    "base_stock_loss",
    "build_marginals",
    "dataset_risk",
    "delta_breakpoints",
    "discretization_gap",
    "draw",
    "emit_results",
    "erm_St",
    "erm_base_stock",
    "erm_eoq_base_stock",
    "erm_sS",
    "exact_risk",
    "finite_support_risk",
    "ge_estimate",
    "gen_sS_prime_shatter",
    "gen_st_K_shatter",
    "gen_st_shatter",
    "grid_oracle",
    "marginal_pmfs",
    "mc_risk",
    "model_risk",
    "optimal_dp",
    "perm_fit",
    "perm_risk",
    "perm_risk_mc",
    "product_partition",
    "rademacher_estimate",
    "read_demands_csv",
    "reorder_schedule",
    "run_experiment",
    "sample_instance",
    "simulate",
    "verify_shattering",
    "write_demands_csv",
]
