//! Penalized least squares on a centered response.
//!
//! Neither fit carries an intercept column. The response is centered and its
//! mean is reported as [`Coefficients::intercept`], so a prediction at `x` is
//! `intercept + xᵀβ`.

use serde::{Deserialize, Serialize};

use super::matrix::{cholesky, cholesky_inverse, cholesky_solve, dot, Matrix};
use crate::error::{Error, Result};

/// Coordinate-descent stopping rule: largest absolute coordinate move in a sweep.
pub const CD_TOLERANCE: f64 = 1e-8;
pub const CD_MAX_SWEEPS: usize = 10_000;

/// Denominator floor for signal-to-noise ratios of (near) interpolating fits.
const MSE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub values: Vec<f64>,
    pub intercept: f64,
}

impl Coefficients {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.values, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub mse: f64,
    pub se: Vec<f64>,
    pub snr: f64,
}

fn check_inputs(x: &Matrix, y: &[f64]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} responses for {} rows",
            y.len(),
            x.rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if x.rows() < 2 {
        return Err(Error::Degenerate("need at least two observations".into()));
    }
    Ok(())
}

fn centered(y: &[f64]) -> (Vec<f64>, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}

pub fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `‖y − Xβ‖² + λ(α‖β‖₁ + (1−α)‖β‖²)` on the centered response by
/// cyclic coordinate descent. The objective is used exactly as written, with no
/// `1/n` rescaling of the loss.
pub fn elastic_net_fit(x: &Matrix, y: &[f64], lambda: f64, alpha: f64) -> Result<Coefficients> {
    check_inputs(x, y)?;
    if !(lambda >= 0.0) || !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "elastic net needs lambda >= 0 and alpha in [0,1], got {lambda}, {alpha}"
        )));
    }
    let (yc, mean) = centered(y);
    let p = x.cols();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let l1 = lambda * alpha / 2.0;
    let denom: Vec<f64> = cols
        .iter()
        .map(|c| dot(c, c) + lambda * (1.0 - alpha))
        .collect();

    let mut beta = vec![0.0; p];
    let mut resid = yc;
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if denom[j] <= 0.0 {
                continue;
            }
            let c = &cols[j];
            let old = beta[j];
            // xⱼᵀ(partial residual) with coordinate j restored
            let rho = dot(c, &resid) + (denom[j] - lambda * (1.0 - alpha)) * old;
            let new = soft_threshold(rho, l1) / denom[j];
            let delta = new - old;
            if delta != 0.0 {
                for (r, &cv) in resid.iter_mut().zip(c) {
                    *r -= cv * delta;
                }
                beta[j] = new;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < CD_TOLERANCE {
            break;
        }
    }
    Ok(Coefficients {
        values: beta,
        intercept: mean,
    })
}

fn regularized_inverse(x: &Matrix, lambda: f64) -> Result<(Matrix, Matrix)> {
    let mut a = x.gram();
    for i in 0..a.rows() {
        a[(i, i)] += lambda;
    }
    let l = cholesky(&a).ok_or(Error::SolveFailure)?;
    Ok((l.clone(), cholesky_inverse(&l)))
}

/// Ridge standard errors and signal-to-noise for an arbitrary coefficient
/// vector: residual MSE with divisor `n`, `seᵢ = √(mse·[(XᵀX+λI)⁻¹]ᵢᵢ)`,
/// `snr = PopVar(Xβ)/mse`.
pub fn ridge_diagnostics(
    x: &Matrix,
    y: &[f64],
    beta: &[f64],
    lambda: f64,
) -> Result<RegressionDiagnostics> {
    check_inputs(x, y)?;
    let (_, inv) = regularized_inverse(x, lambda)?;
    Ok(diagnostics_with_inverse(x, y, beta, &inv))
}

fn diagnostics_with_inverse(
    x: &Matrix,
    y: &[f64],
    beta: &[f64],
    inv: &Matrix,
) -> RegressionDiagnostics {
    let (yc, _) = centered(y);
    let fitted = x.mul_vec(beta);
    let n = y.len() as f64;
    let mse = yc
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let se = (0..beta.len())
        .map(|i| (mse * inv[(i, i)]).max(0.0).sqrt())
        .collect();
    RegressionDiagnostics {
        mse,
        se,
        snr: signal_to_noise(&fitted, mse),
    }
}

pub fn signal_to_noise(fitted: &[f64], mse: f64) -> f64 {
    let var = population_variance(fitted);
    if var == 0.0 {
        0.0
    } else {
        var / mse.max(MSE_FLOOR)
    }
}

/// `β̂ = (XᵀX + λI)⁻¹Xᵀy` on the centered response, with diagnostics.
pub fn ridge_fit_with_se(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
) -> Result<(Coefficients, RegressionDiagnostics)> {
    check_inputs(x, y)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "ridge lambda must be positive, got {lambda}"
        )));
    }
    let (yc, mean) = centered(y);
    let (l, inv) = regularized_inverse(x, lambda)?;
    let beta = cholesky_solve(&l, &x.t_mul_vec(&yc));
    let diag = diagnostics_with_inverse(x, y, &beta, &inv);
    Ok((
        Coefficients {
            values: beta,
            intercept: mean,
        },
        diag,
    ))
}
