//! Gaussian-process surrogate with an isotropic Matérn-5/2 kernel.
//!
//! Hyperparameters `(σ_f², ℓ, σ_n²)` are fitted by maximizing the log marginal
//! likelihood in log space: a fixed number of restarts drawn log-uniformly
//! from the bounds, each refined by projected gradient ascent with
//! backtracking on the analytic gradient. Inputs are used in coded units as
//! given; the response is centered and its mean restored in predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{
    cholesky, cholesky_inverse, cholesky_solve, dot, forward_subst, Matrix, RandomStream,
};

pub const PARAM_LOWER: f64 = 1e-4;
pub const PARAM_UPPER: f64 = 1e4;
pub const NOISE_FLOOR: f64 = 1e-6;
pub const BOUNDS_VERSION: &str = "log-box[1e-4,1e4];noise-floor=1e-6;v1";
pub const RESTARTS: usize = 20;
pub const MAX_ITERATIONS: usize = 200;

const JITTER_LADDER: [f64; 8] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_f2: f64,
    pub ell: f64,
    pub sigma_n2: f64,
}

impl KernelParams {
    fn from_log(t: [f64; 3]) -> Self {
        Self {
            sigma_f2: t[0].exp(),
            ell: t[1].exp(),
            sigma_n2: t[2].exp(),
        }
    }

    fn log_bounds() -> [(f64, f64); 3] {
        let (lo, hi) = (PARAM_LOWER.ln(), PARAM_UPPER.ln());
        [(lo, hi), (lo, hi), (NOISE_FLOOR.ln(), hi)]
    }

    /// Kernel value at distance `r`.
    pub fn at_distance(&self, r: f64) -> f64 {
        let s = SQRT5 * r / self.ell;
        self.sigma_f2 * (1.0 + s + s * s / 3.0) * (-s).exp()
    }
}

/// `σ_f²(1 + √5r/ℓ + 5r²/(3ℓ²))·exp(−√5r/ℓ)` with `r = ‖x − x′‖₂`.
pub fn matern52_kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> f64 {
    params.at_distance(distance(x, x2))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

fn distance_matrix(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = distance(&x[i], &x[j]);
            d[i * n + j] = r;
            d[j * n + i] = r;
        }
    }
    d
}

fn covariance(dist: &[f64], n: usize, p: &KernelParams, extra_diag: f64) -> Matrix {
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = p.at_distance(dist[i * n + j]);
            if i == j {
                v += p.sigma_n2 + extra_diag;
            }
            data.push(v);
        }
    }
    Matrix::new(n, n, data).expect("finite kernel values")
}

/// Cholesky factor of `K + σ_n²I`, escalating a diagonal jitter on failure.
fn factorize(dist: &[f64], n: usize, p: &KernelParams) -> Option<(Matrix, f64)> {
    JITTER_LADDER
        .iter()
        .find_map(|&j| cholesky(&covariance(dist, n, p, j)).map(|l| (l, j)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub params: KernelParams,
    pub train_x: Vec<Vec<f64>>,
    /// Centered responses; empty for variance-only models.
    pub train_y: Vec<f64>,
    pub y_mean: f64,
    pub jitter: f64,
    #[serde(skip)]
    chol: Option<Matrix>,
    #[serde(skip)]
    alpha: Vec<f64>,
    pub variance_only: bool,
}

impl GpModel {
    /// Posterior at fixed hyperparameters.
    pub fn with_params(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Shape(format!("{} inputs, {} responses", x.len(), y.len())));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n = x.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let dist = distance_matrix(x);
        let (l, jitter) = factorize(&dist, n, &params).ok_or(Error::FitFailure)?;
        let alpha = cholesky_solve(&l, &yc);
        Ok(Self {
            params,
            train_x: x.to_vec(),
            train_y: yc,
            y_mean,
            jitter,
            chol: Some(l),
            alpha,
            variance_only: false,
        })
    }

    fn chol(&self) -> &Matrix {
        self.chol.as_ref().expect("factorized at construction")
    }

    /// Restores the factorization after deserialization.
    pub fn refactorize(mut self) -> Result<Self> {
        let n = self.train_x.len();
        let dist = distance_matrix(&self.train_x);
        let l = cholesky(&covariance(&dist, n, &self.params, self.jitter))
            .ok_or(Error::FitFailure)?;
        if !self.variance_only {
            self.alpha = cholesky_solve(&l, &self.train_y);
        }
        self.chol = Some(l);
        Ok(self)
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        self.train_x
            .iter()
            .map(|t| matern52_kernel(x, t, &self.params))
            .collect()
    }

    /// Latent posterior variance, clamped to `[0, σ_f² + σ_n²]`.
    pub fn variance(&self, x: &[f64]) -> f64 {
        let mut v = self.cross(x);
        forward_subst(self.chol(), &mut v);
        let var = self.params.sigma_f2 - dot(&v, &v);
        var.clamp(0.0, self.params.sigma_f2 + self.params.sigma_n2)
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        if self.variance_only {
            return Err(Error::MeanQueryOnVarianceOnlyModel);
        }
        Ok(self.y_mean + dot(&self.cross(x), &self.alpha))
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        Ok((self.mean(x)?, self.variance(x)))
    }

    /// Posterior after observing `new_x` with unknown responses. Only variance
    /// queries are valid on the result.
    pub fn condition_on_points(&self, new_x: &[Vec<f64>]) -> Result<GpModel> {
        let mut train_x = self.train_x.clone();
        train_x.extend(new_x.iter().cloned());
        let n = train_x.len();
        let dist = distance_matrix(&train_x);
        let (l, jitter) = factorize(&dist, n, &self.params).ok_or(Error::FitFailure)?;
        Ok(GpModel {
            params: self.params,
            train_x,
            train_y: Vec::new(),
            y_mean: self.y_mean,
            jitter,
            chol: Some(l),
            alpha: Vec::new(),
            variance_only: true,
        })
    }

    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if self.variance_only {
            return Err(Error::MeanQueryOnVarianceOnlyModel);
        }
        let l = self.chol();
        let logdet: f64 = (0..l.rows()).map(|i| l[(i, i)].ln()).sum();
        Ok(-0.5 * dot(&self.train_y, &self.alpha)
            - logdet
            - 0.5 * self.train_y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Log marginal likelihood and its gradient w.r.t. log-parameters.
struct Objective<'a> {
    dist: Vec<f64>,
    y: &'a [f64],
    n: usize,
}

impl Objective<'_> {
    fn value(&self, theta: [f64; 3]) -> Option<(f64, Matrix)> {
        let p = KernelParams::from_log(theta);
        let (l, _) = factorize(&self.dist, self.n, &p)?;
        let a = cholesky_solve(&l, self.y);
        let logdet: f64 = (0..self.n).map(|i| l[(i, i)].ln()).sum();
        let v = -0.5 * dot(self.y, &a)
            - logdet
            - 0.5 * self.n as f64 * (2.0 * std::f64::consts::PI).ln();
        v.is_finite().then_some((v, l))
    }

    fn gradient(&self, theta: [f64; 3], l: &Matrix) -> [f64; 3] {
        let p = KernelParams::from_log(theta);
        let n = self.n;
        let a = cholesky_solve(l, self.y);
        let kinv = cholesky_inverse(l);
        // ½ tr((ααᵀ − K⁻¹) ∂K/∂θ) for each log-parameter
        let mut g = [0.0; 3];
        for i in 0..n {
            for j in 0..n {
                let w = a[i] * a[j] - kinv[(i, j)];
                let r = self.dist[i * n + j];
                let s = SQRT5 * r / p.ell;
                let e = (-s).exp();
                let kf = p.sigma_f2 * (1.0 + s + s * s / 3.0) * e;
                let dl = p.sigma_f2 * e * s * s * (1.0 + s) / 3.0;
                g[0] += w * kf;
                g[1] += w * dl;
                if i == j {
                    g[2] += w * p.sigma_n2;
                }
            }
        }
        g.map(|v| 0.5 * v)
    }
}

fn project(theta: [f64; 3]) -> [f64; 3] {
    let b = KernelParams::log_bounds();
    [
        theta[0].clamp(b[0].0, b[0].1),
        theta[1].clamp(b[1].0, b[1].1),
        theta[2].clamp(b[2].0, b[2].1),
    ]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Zeroes gradient components that point out of the box at an active bound.
fn free_gradient(theta: &[f64; 3], g: &[f64; 3]) -> [f64; 3] {
    let b = KernelParams::log_bounds();
    let mut out = *g;
    for i in 0..3 {
        if (theta[i] <= b[i].0 && g[i] < 0.0) || (theta[i] >= b[i].1 && g[i] > 0.0) {
            out[i] = 0.0;
        }
    }
    out
}

/// Projected quasi-Newton ascent (BFGS inverse-Hessian update) with Armijo
/// backtracking on the projected path.
fn ascend(obj: &Objective, start: [f64; 3]) -> Option<([f64; 3], f64)> {
    const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    const MAX_STEP: f64 = 3.0;
    let mut theta = project(start);
    let (mut value, l) = obj.value(theta)?;
    let mut g = obj.gradient(theta, &l);
    let mut h = IDENTITY;
    for _ in 0..MAX_ITERATIONS {
        let gf = free_gradient(&theta, &g);
        if gf.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6 {
            break;
        }
        let mut d = [0.0; 3];
        for i in 0..3 {
            d[i] = if gf[i] == 0.0 { 0.0 } else { (0..3).map(|j| h[i][j] * gf[j]).sum() };
        }
        if dot3(&d, &gf) <= 0.0 {
            h = IDENTITY;
            d = gf;
        }
        let biggest = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = (MAX_STEP / biggest).min(1.0);
        let mut accepted = None;
        for _ in 0..30 {
            let cand = project([
                theta[0] + step * d[0],
                theta[1] + step * d[1],
                theta[2] + step * d[2],
            ]);
            let s = [cand[0] - theta[0], cand[1] - theta[1], cand[2] - theta[2]];
            let moved = dot3(&s, &g);
            if moved <= 0.0 {
                step *= 0.5;
                continue;
            }
            if let Some((v, lc)) = obj.value(cand) {
                if v >= value + 1e-4 * moved {
                    accepted = Some((cand, s, v, lc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, s, v, lc)) = accepted else {
            if h == IDENTITY {
                break;
            }
            h = IDENTITY;
            continue;
        };
        let g_new = obj.gradient(cand, &lc);
        // Minimization convention on -f: y = g_old - g_new.
        let y = [g[0] - g_new[0], g[1] - g_new[1], g[2] - g_new[2]];
        let sy = dot3(&s, &y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| h[i][j] * y[j]).sum());
            let yhy = dot3(&y, &hy);
            let mut next = h;
            for i in 0..3 {
                for j in 0..3 {
                    next[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            h = next;
        }
        let gain = v - value;
        let largest_move = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        theta = cand;
        value = v;
        g = g_new;
        if gain < 1e-9 * (1.0 + value.abs()) && largest_move < 1e-8 {
            break;
        }
    }
    Some((theta, value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOutcome {
    pub start: KernelParams,
    pub optimum: Option<(KernelParams, f64)>,
}

/// Fits hyperparameters and returns the posterior at the best restart
/// together with every restart's outcome. Ties go to the lowest restart index.
pub fn gp_fit_with_restarts(
    x: &[Vec<f64>],
    y: &[f64],
    stream: &RandomStream,
) -> Result<(GpModel, Vec<RestartOutcome>)> {
    if x.len() < 3 {
        return Err(Error::Degenerate("GP fit needs at least three points".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs, {} responses", x.len(), y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let obj = Objective {
        dist: distance_matrix(x),
        y: &yc,
        n,
    };
    let bounds = KernelParams::log_bounds();
    let mut outcomes = Vec::with_capacity(RESTARTS);
    let mut best: Option<(KernelParams, f64)> = None;
    for r in 0..RESTARTS {
        let mut s = stream.child(r as u64);
        let start = [0, 1, 2].map(|i| s.next_range(bounds[i].0, bounds[i].1));
        let optimum = ascend(&obj, start).map(|(t, v)| (KernelParams::from_log(t), v));
        if let Some((p, v)) = optimum {
            if best.map_or(true, |(_, bv)| v > bv) {
                best = Some((p, v));
            }
        }
        outcomes.push(RestartOutcome {
            start: KernelParams::from_log(start),
            optimum,
        });
    }
    let (params, _) = best.ok_or(Error::FitFailure)?;
    Ok((GpModel::with_params(x, y, params)?, outcomes))
}

pub fn gp_fit(x: &[Vec<f64>], y: &[f64], stream: &RandomStream) -> Result<GpModel> {
    gp_fit_with_restarts(x, y, stream).map(|(m, _)| m)
}
