//! Probabilistic interpretation of exponentially tilted matrix-exponential
//! distributions.
//!
//! A matrix-exponential (ME) law with parameters `(alpha, T, s)` has density
//! `f(x) = alpha * exp(T x) * s`, but its parameters need not describe any
//! Markov chain. After tilting by `exp(-lambda x)` with `lambda` at least
//! [`splitting::lambda_zero`], the tilted density becomes the signed absorption
//! density of a terminating Markov jump process on `2p + 2` states: `p`
//! *original* states, `p` *anti*-states and two absorbing states. Absorption
//! in the original absorbing state counts `+1`, in the anti one `-1`.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: dense kernel (matrix exponential, solves, spectral abscissa).
//! - [`medist`]: ME parameters, validation, density, Laplace transform, tilting.
//! - [`splitting`]: sign decomposition, doubled generator, exit profile.
//! - [`jumpsim`]: reproducible simulation of the doubled jump process.
//! - [`estimators`]: signed Monte-Carlo estimators and analytic counterparts.

// `!(a < b)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod jumpsim;
pub mod linalg;
pub mod medist;
pub mod splitting;

pub mod example;

pub use error::{Error, Result};
pub use estimators::{
    analytic_bin_averages, analytic_untilted_doubled, decay_cancellation_check, mc_density_beta,
    mc_density_qbar, mc_expectation_structured, mc_expectation_untilted, uncancelled_growth,
    DensityAccumulator, DensityEstimate, DensityRow, ExpectationAccumulator, ExpectationEstimate,
    Grid, TestFunction, VarianceGuard, Weighting,
};
pub use jumpsim::{
    sample_initial, simulate_batch, simulate_batch_with, simulate_path, simulate_path_traced,
    write_trace, Jump, JumpModel, PathOutcome, RngStream, StateId,
};
pub use linalg::{mat_exp, solve_linear, spectral_abscissa, Matrix, Tolerances, Vector};
pub use medist::{density, laplace_transform, tilt, validate, MEParams, ValidationReport};
pub use nalgebra::Complex;
pub use splitting::{
    auto_lambda, build_generator, check_transience, doubled_matrix, doubled_signed_density,
    exit_profile, initial_split, lambda_zero, sign_split, ExitProfile, Generator, InitialSplit,
    LambdaSpec, SignSplit, Transience,
};
