"""Optimal and greedy rate/power allocation for fading Gaussian multiple-access channels."""

__version__ = "0.1.0"

from .capacity import (PolymatroidRegion, Scenario, averaged_region, awgn_capacity, contains,
                       expand, hausdorff_distance, instantaneous_region, rank_tables)
from .fading import (Exponential, FadingModel, FadingTrace, LogNormal, PointMass, Uniform,
                     moments, sample)
from .utility import Utility
from .allocation import (PowerBudget, PowerControlOracle, boundary_rate, expected_power,
                         per_state_allocation, solve_multipliers)
from .optimize import PolymatroidOracle, frank_wolfe, maximize_linear
from .policy import RatePolicy, evaluate_policy, greedy_rate, performance_gap
from .bounds import (bound_sweep, chebyshev_region_bound, estimate_constants, opt_distance_bound,
                     r_epsilon, sigma_h_squared, theorem1_bound, theorem2_bound,
                     variance_bound_ys)

__all__ = [
    "PolymatroidRegion", "Scenario", "averaged_region", "awgn_capacity", "contains", "expand",
    "hausdorff_distance", "instantaneous_region", "rank_tables",
    "Exponential", "FadingModel", "FadingTrace", "LogNormal", "PointMass", "Uniform", "moments",
    "sample",
    "Utility",
    "PowerBudget", "PowerControlOracle", "boundary_rate", "expected_power",
    "per_state_allocation", "solve_multipliers",
    "PolymatroidOracle", "frank_wolfe", "maximize_linear",
    "RatePolicy", "evaluate_policy", "greedy_rate", "performance_gap",
    "bound_sweep", "chebyshev_region_bound", "estimate_constants", "opt_distance_bound",
    "r_epsilon", "sigma_h_squared", "theorem1_bound", "theorem2_bound", "variance_bound_ys",
]
