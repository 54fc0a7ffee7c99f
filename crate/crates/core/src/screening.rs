//! Phase-1 analytics: effect screening scores, interaction scores and the
//! hybrid critical/moderate/negligible classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{
    elastic_net_fit, median, percentile, ridge_diagnostics, signal_to_noise, Matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub elasticnet_lambda: f64,
    pub elasticnet_alpha: f64,
    /// Ridge penalty in the standard-error formula.
    pub se_lambda: f64,
    pub epsilon: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            elasticnet_lambda: 0.01,
            elasticnet_alpha: 0.5,
            se_lambda: 0.01,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub cwess: Vec<f64>,
    pub beta_main: Vec<f64>,
    pub se_main: Vec<f64>,
    pub mse_main: f64,
    pub snr: f64,
    /// Every pair `i < j` in lexicographic order.
    pub interaction_scores: Vec<InteractionScore>,
    pub snr_full: f64,
    pub w_int: f64,
    pub epsilon: f64,
}

impl ScreeningReport {
    pub fn k(&self) -> usize {
        self.cwess.len()
    }

    /// Recomputes one score from the stored fields.
    pub fn cwess_from_fields(&self, i: usize) -> f64 {
        cwess_value(self.beta_main[i], self.se_main[i], self.epsilon, self.snr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorLabel {
    Critical,
    Moderate,
    Negligible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorClassification {
    pub labels: Vec<FactorLabel>,
    pub critical_set: Vec<usize>,
    pub k_c: usize,
    pub significant_interactions: Vec<(usize, usize)>,
    pub n_int: usize,
    pub tau_p: f64,
    pub tau_a: f64,
    pub tau_crit: f64,
    /// Set when no factor passed the thresholds and the top scorer was
    /// promoted to Critical.
    #[serde(default)]
    pub promoted: Option<usize>,
}

fn cwess_value(beta: f64, se: f64, epsilon: f64, snr: f64) -> f64 {
    beta.abs() / (se + epsilon) * snr.sqrt()
}

/// Weight putting interaction scores on the main-effect scale.
pub fn interaction_weight(k: usize) -> f64 {
    ((k as f64 - 1.0) / 2.0).sqrt()
}

/// Pairs `(i, j)`, `i < j`, in the column order of [`interaction_expand`].
pub fn interaction_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .collect()
}

/// Main-effect columns followed by every pairwise product column.
pub fn interaction_expand(x: &Matrix) -> Result<Matrix> {
    let k = x.cols();
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    let pairs = interaction_pairs(k);
    let width = k + pairs.len();
    let mut data = Vec::with_capacity(x.rows() * width);
    for r in x.row_iter() {
        data.extend_from_slice(r);
        data.extend(pairs.iter().map(|&(i, j)| r[i] * r[j]));
    }
    Matrix::new(x.rows(), width, data)
}

fn check_phase1(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() < 3 {
        return Err(Error::Degenerate("screening needs at least three runs".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} responses for {} runs",
            y.len(),
            x.rows()
        )));
    }
    Ok(())
}

/// Interaction scores from an elastic-net fit of the full two-factor model,
/// scaled by the full model's `√SNR` and the interaction weight. Returns the
/// scores and that SNR.
pub fn interaction_scores(
    x: &Matrix,
    y: &[f64],
    cfg: &ScreeningConfig,
) -> Result<(Vec<InteractionScore>, f64)> {
    check_phase1(x, y)?;
    let k = x.cols();
    let full = interaction_expand(x)?;
    let fit = elastic_net_fit(&full, y, cfg.elasticnet_lambda, cfg.elasticnet_alpha)?;
    let mean = fit.intercept;
    let fitted = full.mul_vec(&fit.values);
    let mse = y
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - mean - fi).powi(2))
        .sum::<f64>()
        / y.len() as f64;
    let snr_full = signal_to_noise(&fitted, mse);
    let w = interaction_weight(k);
    let scores = interaction_pairs(k)
        .into_iter()
        .enumerate()
        .map(|(m, (i, j))| InteractionScore {
            i,
            j,
            score: fit.values[k + m].abs() * snr_full.sqrt() * w,
        })
        .collect();
    Ok((scores, snr_full))
}

/// Full Phase-1 screening report.
pub fn cwess_scores(x: &Matrix, y: &[f64], cfg: &ScreeningConfig) -> Result<ScreeningReport> {
    check_phase1(x, y)?;
    let k = x.cols();
    let fit = elastic_net_fit(x, y, cfg.elasticnet_lambda, cfg.elasticnet_alpha)?;
    let diag = ridge_diagnostics(x, y, &fit.values, cfg.se_lambda)?;
    let cwess = fit
        .values
        .iter()
        .zip(&diag.se)
        .map(|(b, se)| cwess_value(*b, *se, cfg.epsilon, diag.snr))
        .collect();
    let (interaction_scores, snr_full) = if k >= 2 {
        interaction_scores(x, y, cfg)?
    } else {
        (Vec::new(), 0.0)
    };
    Ok(ScreeningReport {
        cwess,
        beta_main: fit.values,
        se_main: diag.se,
        mse_main: diag.mse,
        snr: diag.snr,
        interaction_scores,
        snr_full,
        w_int: interaction_weight(k),
        epsilon: cfg.epsilon,
    })
}

/// Hybrid threshold rule: `τ_p` = 60th percentile of the scores,
/// `τ_a = 0.8·median|β|`, `τ_crit = min(τ_p, τ_a)`. A factor is Critical when
/// its score exceeds `τ_crit` or its `|β|` exceeds `τ_a`; Moderate when its
/// score exceeds `τ_crit/2`; otherwise Negligible.
pub fn classify_factors(report: &ScreeningReport) -> FactorClassification {
    let abs_beta: Vec<f64> = report.beta_main.iter().map(|b| b.abs()).collect();
    let tau_p = percentile(&report.cwess, 0.6);
    let tau_a = 0.8 * median(&abs_beta);
    let tau_crit = tau_p.min(tau_a);
    let labels: Vec<FactorLabel> = report
        .cwess
        .iter()
        .zip(&abs_beta)
        .map(|(&c, &b)| {
            if c > tau_crit || b > tau_a {
                FactorLabel::Critical
            } else if c > 0.5 * tau_crit {
                FactorLabel::Moderate
            } else {
                FactorLabel::Negligible
            }
        })
        .collect();
    let critical_set: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == FactorLabel::Critical)
        .map(|(i, _)| i)
        .collect();
    let significant_interactions: Vec<(usize, usize)> = report
        .interaction_scores
        .iter()
        .filter(|s| s.score > tau_crit)
        .map(|s| (s.i, s.j))
        .collect();
    FactorClassification {
        k_c: critical_set.len(),
        critical_set,
        n_int: significant_interactions.len(),
        significant_interactions,
        labels,
        tau_p,
        tau_a,
        tau_crit,
        promoted: None,
    }
}

impl FactorClassification {
    /// With an empty critical set, promotes the highest-scoring factor (lowest
    /// index on ties) so that Phase 2 has something to augment.
    pub fn ensure_nonempty(mut self, report: &ScreeningReport) -> Self {
        if self.k_c > 0 || report.cwess.is_empty() {
            return self;
        }
        let mut top = 0;
        for (i, &c) in report.cwess.iter().enumerate() {
            if c > report.cwess[top] {
                top = i;
            }
        }
        self.labels[top] = FactorLabel::Critical;
        self.critical_set = vec![top];
        self.k_c = 1;
        self.promoted = Some(top);
        self
    }
}
