//! Theory-side quantities: dependency matrices, hypercontractivity constants,
//! offset complexities, bound evaluators and Monte Carlo checks.

pub mod bounds;
pub mod checks;
pub mod complexity;
pub mod constants;
pub mod dependency;
pub mod hyper;

pub use bounds::{
    burn_in, chaining_bound, main_bound, Alpha1Terms, BoundReport, BurnInParams, BurnInReport, ChainingOpts,
    ChainingResult,
};
pub use checks::{
    default_lower_isometry_scenarios, lower_isometry_check, moment_equivalence_check, samson_check, sphere_net,
    stationary_transfer_check, truncated_noise_diag, LowerIsometryReport, LowerIsometryScenario, SamsonReport,
    MomentEquivalenceReport, QuadFormRow, SamsonRow, TransferReport, TruncatedNoiseReport,
};
pub use complexity::{martingale_complexity_general, martingale_complexity_linear};
pub use dependency::{
    dependency_bound_glm, dependency_bound_lds, dependency_matrix_finite, dependency_opnorm, DependencyMatrix,
    Provenance, DEFAULT_DEPENDENCY_CAP,
};
pub use hyper::{
    averaged_marginal, chain_moments, hyper_estimate, hyper_ratio, mu_min, random_table_member, HyperEstimate,
};
