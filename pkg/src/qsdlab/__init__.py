"""Numerical laboratory for absorbed Markov dynamics: decay-conditioned
evolutions, quasi-stationary laws, survival capacities, certified coupling
bounds, and the never-absorbed transform."""

from .artifacts import (build_exhaustion, build_model, dumps_json,
                        load_exhaustion_config, load_model_config,
                        read_manifest, validate_exhaustion_config,
                        validate_model_config, write_manifest)
from .assumptions import (AssumptionCertificate, Exhaustion, RetentionReport,
                          check_dc, check_et, check_mix, check_sv,
                          derive_coupling_constants, eta_sup_bound,
                          lj_certificate, max_escape_rate, mix_extension,
                          replay_certificate, sv_from_regeneration,
                          verify_mass_retention)
from .coupling import (CouplingConstants, CouplingRun, conditioned_time_marginal,
                       coupling_mass, glb_minorant, horizon_steps,
                       minorizing_measure, verify_glb, verify_lower_bound)
from .errors import (AllExtinctError, DegenerateSpectrumWarning,
                     DominationViolatedError, EmptyDomainError,
                     ExtinctMassError, HorizonTooShortError,
                     InductionBrokenError, NoConvergenceError,
                     NotIrreducibleError, QsdError, SchemaError,
                     SingularSystemError)
from .generator import (ProbabilityVector, SubMarkovGenerator, as_weights,
                        dcne, exit_probability_vector, point_mass,
                        semigroup_apply, survival_probability, survival_vector,
                        tv_distance)
from .montecarlo import (JumpSampler, ParticleEnsemble, estimate_dcne_naive,
                         fleming_viot, gillespie, qprocess_generator,
                         qprocess_simulate)
from .rng import chunk_ranges, run_chunked, stream
from .spectral import (ConvergenceProfile, EigenPair, convergence_profile,
                       default_t_grid, fit_decay_rate, is_irreducible,
                       solve_eigentriple, survival_capacity_profile,
                       survival_capacity_t)

__version__ = "0.1.0"

__all__ = [
    "build_exhaustion", "build_model", "dumps_json", "load_exhaustion_config",
    "load_model_config", "read_manifest", "validate_exhaustion_config",
    "validate_model_config", "write_manifest",
    "AssumptionCertificate", "Exhaustion", "RetentionReport", "check_dc",
    "check_et", "check_mix", "check_sv", "derive_coupling_constants",
    "eta_sup_bound", "lj_certificate", "max_escape_rate", "mix_extension",
    "replay_certificate", "sv_from_regeneration", "verify_mass_retention",
    "CouplingConstants", "CouplingRun", "conditioned_time_marginal",
    "coupling_mass", "glb_minorant", "horizon_steps", "minorizing_measure",
    "verify_glb", "verify_lower_bound",
    "AllExtinctError", "DegenerateSpectrumWarning", "DominationViolatedError",
    "EmptyDomainError", "ExtinctMassError", "HorizonTooShortError",
    "InductionBrokenError", "NoConvergenceError", "NotIrreducibleError",
    "QsdError", "SchemaError", "SingularSystemError",
    "ProbabilityVector", "SubMarkovGenerator", "as_weights", "dcne",
    "exit_probability_vector", "point_mass", "semigroup_apply",
    "survival_probability", "survival_vector", "tv_distance",
    "JumpSampler", "ParticleEnsemble", "estimate_dcne_naive", "fleming_viot",
    "gillespie", "qprocess_generator", "qprocess_simulate",
    "chunk_ranges", "run_chunked", "stream",
    "ConvergenceProfile", "EigenPair", "convergence_profile",
    "default_t_grid", "fit_decay_rate", "is_irreducible", "solve_eigentriple",
    "survival_capacity_profile", "survival_capacity_t",
    "__version__",
]
