from .allocation import (
    LevelPlan,
    RateParams,
    allocate_samples,
    allocate_samples_numeric,
    constraint_value,
    continuous_allocation,
    level_sizes,
    power_law_costs,
    theorem_allocation,
)
from .rates import LineFit, RateEstimate, convergence_study, estimate_rates, fit_loglog, rates_from_data
from .sampling import (
    LevelStats,
    MCResult,
    MLMCResult,
    mc_estimate,
    mlmc_estimate,
    spawn_seeds,
    variance_decay_probe,
)
from .studies import MCErrorRow, MLMCErrorRow, calibrate_costs, mc_error_study, mlmc_error_study

__all__ = [
    "LevelPlan",
    "RateParams",
    "allocate_samples",
    "allocate_samples_numeric",
    "constraint_value",
    "continuous_allocation",
    "level_sizes",
    "power_law_costs",
    "theorem_allocation",
    "LineFit",
    "RateEstimate",
    "convergence_study",
    "estimate_rates",
    "fit_loglog",
    "rates_from_data",
    "LevelStats",
    "MCResult",
    "MLMCResult",
    "mc_estimate",
    "mlmc_estimate",
    "spawn_seeds",
    "variance_decay_probe",
    "MCErrorRow",
    "MLMCErrorRow",
    "calibrate_costs",
    "mc_error_study",
    "mlmc_error_study",
]
