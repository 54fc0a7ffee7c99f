//! Differential evolution over a box, and variance-guided refinement points.

use serde::{Deserialize, Serialize};

use crate::design::{Design, Phase, RowTag};
use crate::error::{Error, Result};
use crate::numkit::RandomStream;
use crate::surrogate::GpModel;

/// Generations over which the best value must improve by more than `tol`
/// for the search to continue.
const STALL_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    /// Population size; `None` means `15·k`.
    pub population: Option<usize>,
    pub f_weight: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub tol: f64,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population: None,
            f_weight: 0.8,
            crossover: 0.9,
            max_generations: 200,
            tol: 1e-8,
        }
    }
}

impl DEConfig {
    pub fn population_for(&self, k: usize) -> usize {
        self.population.unwrap_or(15 * k).max(4)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.population.is_none_or(|p| p >= 4)
            && self.f_weight > 0.0
            && self.f_weight.is_finite()
            && (0.0..=1.0).contains(&self.crossover)
            && self.max_generations >= 1
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad DE settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumEstimate {
    pub x_star: Vec<f64>,
    pub mu_at_x_star: f64,
    pub var_at_x_star: f64,
}

/// Maximizes `objective` over the box `[lower, upper]` with DE/rand/1/bin.
/// Trial vectors are clamped to the box before evaluation.
pub fn de_maximize<F>(
    objective: F,
    lower: &[f64],
    upper: &[f64],
    config: &DEConfig,
    stream: &mut RandomStream,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let k = lower.len();
    assert_eq!(k, upper.len(), "bound vectors differ in length");
    assert!(lower.iter().zip(upper).all(|(l, u)| l <= u), "empty box");
    let np = config.population_for(k);

    let eval = |x: &[f64]| {
        debug_assert!(x.iter().zip(lower).zip(upper).all(|((v, l), u)| l <= v && v <= u));
        objective(x)
    };

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..k)
                .map(|d| stream.next_range(lower[d], upper[d]))
                .collect()
        })
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| eval(x)).collect();
    let best_of = |fit: &[f64]| {
        (0..fit.len()).fold(0, |b, i| if fit[i] > fit[b] { i } else { b })
    };
    let mut history = vec![fit[best_of(&fit)]];

    for _ in 0..config.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = stream.next_below(np);
                    if r != i {
                        break r;
                    }
                };
                let a = pick();
                let b = loop {
                    let r = pick();
                    if r != a {
                        break r;
                    }
                };
                let c = loop {
                    let r = pick();
                    if r != a && r != b {
                        break r;
                    }
                };
                let forced = stream.next_below(k);
                (0..k)
                    .map(|d| {
                        let take = d == forced || stream.next_uniform() < config.crossover;
                        let v = if take {
                            pop[a][d] + config.f_weight * (pop[b][d] - pop[c][d])
                        } else {
                            pop[i][d]
                        };
                        v.clamp(lower[d], upper[d])
                    })
                    .collect()
            })
            .collect();
        for (i, t) in trials.into_iter().enumerate() {
            let v = eval(&t);
            if v >= fit[i] {
                pop[i] = t;
                fit[i] = v;
            }
        }
        let best = fit[best_of(&fit)];
        history.push(best);
        if history.len() > STALL_WINDOW {
            let then = history[history.len() - 1 - STALL_WINDOW];
            let scale = config.tol * best.abs().max(1.0);
            // a stalled best alone can be a stagnating population; also
            // require the population to have collapsed onto it
            let worst = fit.iter().copied().fold(f64::INFINITY, f64::min);
            if best - then <= scale && best - worst <= scale {
                break;
            }
        }
    }
    let b = best_of(&fit);
    (pop[b].clone(), fit[b])
}

/// Maximizes the posterior mean over `[−1, 1]^k`.
pub fn locate_optimum(
    model: &GpModel,
    k: usize,
    config: &DEConfig,
    stream: &mut RandomStream,
) -> Result<OptimumEstimate> {
    model.mean(&vec![0.0; k])?;
    let (x_star, _) = de_maximize(
        |x| model.mean(x).expect("mean model"),
        &vec![-1.0; k],
        &vec![1.0; k],
        config,
        stream,
    );
    let (mu, var) = model.predict(&x_star)?;
    Ok(OptimumEstimate {
        x_star,
        mu_at_x_star: mu,
        var_at_x_star: var,
    })
}

/// Greedy sequential variance maximization inside the ∞-norm box of
/// `halfwidth` around `x_star`, clipped to `[−1, 1]^k`. Each chosen point is
/// conditioned on before the next is picked.
pub fn refinement_points(
    model: &GpModel,
    x_star: &[f64],
    n3: usize,
    halfwidth: f64,
    config: &DEConfig,
    stream: &mut RandomStream,
) -> Result<Design> {
    if n3 == 0 {
        return Err(Error::InvalidConfig("n3 must be at least 1".into()));
    }
    if !(halfwidth > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "region halfwidth must be positive, got {halfwidth}"
        )));
    }
    let k = x_star.len();
    let lower: Vec<f64> = x_star.iter().map(|v| (v - halfwidth).max(-1.0)).collect();
    let upper: Vec<f64> = x_star.iter().map(|v| (v + halfwidth).min(1.0)).collect();
    let mut current = model.condition_on_points(&[])?;
    let mut design = Design::empty(k, Phase::P3);
    for _ in 0..n3 {
        let (x, _) = de_maximize(|x| current.variance(x), &lower, &upper, config, stream);
        current = current.condition_on_points(std::slice::from_ref(&x))?;
        design.push(x, RowTag::Refine);
    }
    Ok(design)
}
