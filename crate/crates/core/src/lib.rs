//! Numerical laboratory for Hamilton-Jacobi and degenerate parabolic equations
//! driven by rough continuous signals: monotone finite-difference scheme
//! operators on periodic 1-D grids, driver regularizations with CFL guards,
//! exact Hopf-Lax/characteristics reference solvers, and a convergence harness
//! that measures rates against them.

pub mod driver;
pub mod error;
pub mod grid;
pub mod harness;
pub mod oracle;
pub mod path;
pub mod problem;
pub mod report;
pub mod rng;
pub mod scheme;
pub mod stats;

pub use driver::{
    check_cfl, empirical_holder_constant, exit_time_moments, regularize_regular, sample_brownian,
    scaled_random_walk, solve_rho_implicit, stopping_time_partition, CflReport, ExitMoments,
    Modulus, StoppingTimeFamily,
};
pub use error::{Error, Result};
pub use grid::{Grid1D, GridFunction};
pub use harness::{
    bound_check, build_driver, build_scheme, calibrate_bound_constant, calibrate_path_stability,
    default_eps_list, distribution_study, make_admissible_path, penalization_max, rate_study,
    stopping_time_stats, time_regularity_constant, BoundCheckRecord, Correction,
    DistributionReport, DriverBuild, DriverFamily, HarnessCfg, KsRow, RateReport, RateRow,
    RateStudyCfg, ReferenceKind, StoppingStatsRow,
};
pub use path::{Partition, PiecewisePath};
pub use oracle::{
    characteristics_solution, lax_oleinik_segment, pathwise_oracle, reference_fallback,
    sup_error_against_reference, CosineProfile, FallbackReference, OracleRun, SmoothProfile,
    SmoothSolutionWindow,
};
pub use problem::{
    diffusion_by_id, hamiltonian_by_id, initial_by_id, legendre_transform, problem_by_id,
    problem_ids, Diffusion, Hamiltonian, InitialData, LegendreTransform, NumericStar, Problem,
};
pub use report::{Metadata, VerdictSummary};
pub use scheme::{
    apply_step, evolve, lf_first_order_step, lf_second_order_step, random_admissible_step,
    scheme_ids, trotter_kato_step, upwind_step, verify_consistency, verify_monotonicity, EpsRule,
    EvolveRecord, MonotonicityReport, SchemeKind, SchemeSpec, SnapshotPolicy, StepParams,
};
pub use stats::{fit_rate, ks_against_cdf, normal_cdf, two_sample_ks, FitResult};
