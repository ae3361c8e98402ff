//! Monte Carlo solvers for Neumann problems with Lévy-type operators on
//! bounded convex domains.
//!
//! The probabilistic solution is the discounted Feynman–Kac functional of a
//! reflected jump-diffusion. The crate provides the domain geometry, càdlàg
//! paths, the deterministic Skorokhod map and its penalization, Lévy driver
//! sampling, reflected and penalized SDE schemes, the jump-corrected boundary
//! functional, Monte Carlo estimators with parameter sweeps, and closed-form
//! reference solutions.

pub mod error;
pub mod functionals;
pub mod geometry;
pub mod levy;
pub mod oracles;
pub mod paths;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod skorokhod;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use functionals::{
    boundary_functional, discounted_time_integral, evaluate_it, jump_correction, penalized_boundary_integral,
    FunctionalAccumulator, FunctionalSpec, ScalarField,
};
pub use geometry::{ConvexDomain, Shape};
pub use levy::{
    build_driver, CompoundPoissonSpec, DriverSampler, DriverSource, JumpLaw, LevyDriverSpec, PathDriver,
    SmallJumpPolicy, StableNormalization, StableSampler, StableScheme, StableSpec,
};
pub use oracles::{catalog, find_case, oracle_skorokhod, oracle_u, OracleCase, OracleKind};
pub use paths::{BVPath, CadlagPath, Interpolation, TimeGrid};
pub use rng::{Channel, StreamId};
pub use sde::{
    run_path, simulate_penalized, simulate_reflected, MatrixField, ReflectedTrajectory, Scheme, SdeCoefficients,
    StepObserver, StepRecord, VectorField,
};
pub use skorokhod::{apriori_bounds_check, solve_penalized, solve_reflection, PenalizedSolution, SkorokhodSolution};
pub use solver::{
    estimate_u, estimate_u_penalized, extend_exterior, exterior_correction, moment_experiment, run_sweep,
    CoefficientShift, Horizon, McConfig, McEstimate, MomentTable, NeumannProblem, Sweep, SweepRow, SweepTable,
};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
