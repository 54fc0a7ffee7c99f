//! Numerical kernel shared by every other module.

mod matrix;
mod regression;
mod rng;
mod stats;

pub use matrix::{
    backward_subst, cholesky, cholesky_inverse, cholesky_solve, dot, forward_subst, Matrix,
};
pub use regression::{
    elastic_net_fit, population_variance, ridge_diagnostics, ridge_fit_with_se, signal_to_noise,
    Coefficients, RegressionDiagnostics, CD_MAX_SWEEPS, CD_TOLERANCE,
};
pub use rng::{RandomStream, RNG_ALGORITHM};
pub use stats::{mean, median, percentile, welch_t_test, TTestResult};
