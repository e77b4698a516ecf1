//! Simulation and verification toolkit for the Atlas particle system and its mean-field limit.
//!
//! The crate is organised around the objects of the model:
//!
//! * [`measure`] and [`density`]: the initial law `mu0` and the signed measure `m` with
//!   `m([0, x]) = 1/alpha - mu0(x)`;
//! * [`ensemble`]: reproducible Brownian ensembles with per-path substreams;
//! * [`skorokhod`]: the one-dimensional Skorokhod map at zero and at a moving barrier;
//! * [`particles`]: the finite Atlas system and its empirical boundary measure;
//! * [`fixed_point`]: the mean-field boundary `b = alpha * ell` by fixed-point iteration;
//! * [`stefan`]: a front-fixing finite-difference solver for the moving-boundary PDE;
//! * [`harness`]: configuration, cross-solver comparison, property checks and convergence studies.

pub mod density;
pub mod ensemble;
pub mod error;
pub mod fixed_point;
pub mod harness;
pub mod measure;
pub mod params;
pub mod particles;
pub mod skorokhod;
pub mod stefan;

pub use density::PiecewiseDensity;
pub use ensemble::PathEnsemble;
pub use error::{Error, Result};
pub use fixed_point::{
    lambda_map, lambda_map_hitting, mean_field_density, solve_boundary_fixed_point, validate_mean_local_time,
    FixedPointReport, SolverOptions,
};
pub use measure::{build_from_initial_density, Atom, Cell, Criticality, SignedMeasureProfile};
pub use params::{BoundaryPath, ModelParams, TimeGrid};
pub use particles::{simulate_atlas, AtlasConfig, AtlasScheme, ParticleRecord};
pub use skorokhod::{reflect_against_barrier, reflect_at_zero, running_regulator, Monitoring, ReflectedPair};
pub use stefan::{solve_fpe_front_fixed, DensitySnapshot, PdeOptions, PdeSolution};
