//! Configuration, cross-solver comparison, property checks and convergence studies.

pub mod compare;
pub mod config;
pub mod output;
pub mod properties;
pub mod study;

pub use compare::{compare_boundaries, ComparisonReport};
pub use config::ExperimentConfig;
pub use output::RunManifest;
pub use properties::{run_property_suite, PropertyReport};
pub use study::{run_convergence_study, ConvergenceTable};

use crate::ensemble::PathEnsemble;
use crate::error::Result;
use crate::fixed_point::{solve_boundary_fixed_point, FixedPointReport, SolverOptions};

/// Solver options described by the configuration.
pub fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.mc.tolerance,
        max_iter: cfg.mc.max_iter,
        damping: cfg.mc.damping,
        monitoring: cfg.discretization.monitoring,
        ..SolverOptions::default()
    }
}

/// The solver's ensemble: `paths` Brownian paths on the configured grid, keyed by the seed.
pub fn solver_ensemble(cfg: &ExperimentConfig) -> Result<PathEnsemble> {
    PathEnsemble::new(cfg.mc.seed, cfg.discretization.paths, cfg.params()?.grid())
}

/// Solves the mean-field boundary for the configured model.
pub fn solve_boundary(cfg: &ExperimentConfig) -> Result<FixedPointReport> {
    solve_boundary_fixed_point(&cfg.measure()?, &solver_ensemble(cfg)?, &solver_options(cfg))
}
