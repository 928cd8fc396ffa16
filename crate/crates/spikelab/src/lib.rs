//! Spike asymptotics of two-dimensional attractive Gross-Pitaevskii ground states.
//!
//! The crate computes the Townes profile, the trap analysis `H(y) = ∫ h(x+y) w^2`,
//! the correction profiles of the refined spike expansion, the expansion constants,
//! and direct constrained minimizers of the Gross-Pitaevskii energy, then compares
//! them.

pub mod asymptotics;
pub mod config;
pub mod error;
pub mod field;
pub mod gp2d;
pub mod krylov;
pub mod linearized;
pub mod ode;
pub mod potential;
pub mod quad;
pub mod radial;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use field::{CartesianGrid2D, Field2D, Grid2D};
pub use radial::{
    gn_ratio, radial_identity_report, solve_townes, solve_townes_with, IdentityReport, RadialGrid, TownesOptions,
    TownesProfile,
};
pub use potential::{
    check_kernel_orthogonality, eval_h, find_critical_point, AngularProfile, Envelope, EnvelopeTaylor, PotentialAnalysis,
    PotentialSpec,
};
pub use linearized::{assemble_l, build_corrections, solve_mod_kernel, CorrectionSet, LinearOperator, LinearOptions};
pub use asymptotics::{
    classify_case, compute_constants, compute_s, predict_beta, predict_energy, predict_mu, predict_profile, AsymptoticConstants,
    CaseTag, ExpansionPrediction, ScaleParameters, Truncation,
};
pub use gp2d::{minimize, pohozaev_residual, uniqueness_probe, GpOptions, GpProblem, GroundState2D, Method};
pub use config::RunConfig;
pub use verify::{run_verification, Pipeline, Study, VerificationReport};
