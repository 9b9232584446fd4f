from .birth_death import (BDCParams, build_bdc, build_bdnu, golden_chain,
                          nonuniformity_experiment, prefix_exhaustion,
                          resolve_rate, window_exit_probability)
from .diffusion import (DiffusionSpec, TransitoryDecomposition, Trajectory,
                        combine_escape_bounds, csbp_extinction, csbp_laplace,
                        csbp_u_infinity, descent_thresholds,
                        discretize_diffusion, escape_moment_mc,
                        estimate_linked_constants, feller_extinction_mc,
                        quadratic_well_spec, simulate_diffusion,
                        spec_from_json, ydp_descent_check, ydp_rd_sweep)

__all__ = [
    "BDCParams", "build_bdc", "build_bdnu", "golden_chain",
    "nonuniformity_experiment", "prefix_exhaustion", "resolve_rate",
    "window_exit_probability",
    "DiffusionSpec", "TransitoryDecomposition", "Trajectory",
    "combine_escape_bounds", "csbp_extinction", "csbp_laplace",
    "csbp_u_infinity", "descent_thresholds", "discretize_diffusion",
    "escape_moment_mc", "estimate_linked_constants", "feller_extinction_mc",
    "quadratic_well_spec", "simulate_diffusion", "spec_from_json",
    "ydp_descent_check", "ydp_rd_sweep",
]
