use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::RandomStream;
use crate::optimize::{de_maximize, DEConfig};

pub const SCENARIO_NAMES: [&str; 6] = [
    "sparse_few",
    "sparse_many",
    "moderate",
    "dense",
    "interaction_heavy",
    "quadratic_heavy",
];

pub const BENCH_K: usize = 6;
pub const NOISE_SIGMA: f64 = 2.0;
pub const INTERACTION_COEFF: f64 = 3.0;
pub const QUADRATIC_COEFF: f64 = -2.0;

/// Known-truth response over `[-1, 1]^k`:
/// `Σ βᵢxᵢ + Σ cᵢⱼxᵢxⱼ + Σ qᵢxᵢ² + N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub name: String,
    pub main_coeffs: Vec<f64>,
    pub interactions: Vec<(usize, usize, f64)>,
    pub quadratics: Vec<(usize, f64)>,
    pub noise_sigma: f64,
}

impl ScenarioTruth {
    pub fn k(&self) -> usize {
        self.main_coeffs.len()
    }

    /// Factors with a nonzero main effect.
    pub fn critical_set(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| self.main_coeffs[i] != 0.0).collect()
    }

    pub fn mean_response(&self, x: &[f64]) -> f64 {
        let main: f64 = self.main_coeffs.iter().zip(x).map(|(b, v)| b * v).sum();
        let int: f64 = self.interactions.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum();
        let quad: f64 = self.quadratics.iter().map(|&(i, q)| q * x[i] * x[i]).sum();
        main + int + quad
    }

    /// Noisy observation and the noise that was added.
    pub fn observe(&self, x: &[f64], noise: &mut RandomStream) -> (f64, f64) {
        let e = self.noise_sigma * noise.next_normal();
        (self.mean_response(x) + e, e)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let bad = |m: String| Err(Error::InvalidConfig(format!("scenario {}: {m}", self.name)));
        if k < 2 {
            return bad(format!("needs at least 2 factors, has {k}"));
        }
        if self.interactions.iter().any(|&(i, j, _)| i >= k || j >= k || i == j) {
            return bad("interaction index out of range".into());
        }
        if self.quadratics.iter().any(|&(i, _)| i >= k) {
            return bad("quadratic index out of range".into());
        }
        let finite = self.main_coeffs.iter().all(|v| v.is_finite())
            && self.interactions.iter().all(|t| t.2.is_finite())
            && self.quadratics.iter().all(|t| t.1.is_finite());
        if !finite || !(self.noise_sigma >= 0.0) {
            return bad("coefficients must be finite and noise_sigma >= 0".into());
        }
        Ok(())
    }
}

fn spaced(from: f64, to: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| from + (to - from) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Built-in scenarios: critical factors at the lowest indices, interactions on
/// the lexicographically first critical pairs, quadratics on the first
/// critical factors.
pub fn make_scenario(name: &str) -> Result<ScenarioTruth> {
    let (mains, n_int, n_quad) = match name {
        "sparse_few" => (vec![8.0, 6.5], 1, 2),
        "sparse_many" => (vec![8.0, 6.5, 5.0], 2, 3),
        "moderate" => (spaced(7.0, 4.5, 4), 2, 2),
        "dense" => (spaced(6.0, 3.5, 6), 3, 3),
        "interaction_heavy" => (spaced(6.0, 4.5, 4), 5, 1),
        "quadratic_heavy" => (spaced(7.0, 5.0, 3), 1, 3),
        _ => return Err(Error::UnknownScenario(name.to_string())),
    };
    let k_c = mains.len();
    let mut main_coeffs = mains;
    main_coeffs.resize(BENCH_K, 0.0);
    let interactions = (0..k_c)
        .flat_map(|i| ((i + 1)..k_c).map(move |j| (i, j, INTERACTION_COEFF)))
        .take(n_int)
        .collect();
    let quadratics = (0..n_quad).map(|i| (i, QUADRATIC_COEFF)).collect();
    Ok(ScenarioTruth {
        name: name.to_string(),
        main_coeffs,
        interactions,
        quadratics,
        noise_sigma: NOISE_SIGMA,
    })
}

/// Parses a JSON list of scenario definitions.
pub fn scenarios_from_json(text: &str) -> Result<Vec<ScenarioTruth>> {
    let list: Vec<ScenarioTruth> = serde_json::from_str(text)?;
    for s in &list {
        s.validate()?;
    }
    Ok(list)
}

const OPTIMUM_SEED: u64 = 0x005e_ed0f_7e57;

/// Noiseless argmax over `[-1, 1]^k` by differential evolution with a fixed
/// seed and a tight tolerance.
pub fn true_optimum(truth: &ScenarioTruth) -> (Vec<f64>, f64) {
    true_optimum_seeded(truth, OPTIMUM_SEED)
}

pub fn true_optimum_seeded(truth: &ScenarioTruth, seed: u64) -> (Vec<f64>, f64) {
    let k = truth.k();
    let cfg = DEConfig {
        max_generations: 2000,
        tol: 1e-14,
        ..DEConfig::default()
    };
    de_maximize(
        |x| truth.mean_response(x),
        &vec![-1.0; k],
        &vec![1.0; k],
        &cfg,
        &mut RandomStream::new(seed),
    )
}
