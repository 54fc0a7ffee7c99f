//! Phase-2: choose an augmentation strategy from the screening verdict, build
//! the augmentation block in full factor space, and fit the combined ridge
//! model over Phase-1 and Phase-2 data.

use serde::{Deserialize, Serialize};

use crate::design::{fold_over, full_factorial, half_fraction_res_v, star_points, Design, Phase};
use crate::error::{Error, Result};
use crate::numkit::{ridge_fit_with_se, Coefficients, Matrix, RegressionDiagnostics};
use crate::screening::FactorClassification;

pub const COMBINED_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "A_FullFactorial")]
    FullFactorial,
    #[serde(rename = "B_ResV")]
    ResV,
    #[serde(rename = "C_Star")]
    Star,
    #[serde(rename = "D_FoldOver")]
    FoldOver,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::FullFactorial => "A_FullFactorial",
            StrategyKind::ResV => "B_ResV",
            StrategyKind::Star => "C_Star",
            StrategyKind::FoldOver => "D_FoldOver",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub rationale: String,
}

/// Decision table, first match wins:
///
/// | condition                    | strategy |
/// |------------------------------|----------|
/// | `k_c > 6`                    | D        |
/// | `n_int >= 1`, `k_c <= 5`     | A        |
/// | `n_int >= 1`, `k_c == 6`     | B        |
/// | `n_int == 0`, `k_c <= 3`     | C        |
/// | anything else                | D        |
pub fn select_strategy(k_c: usize, n_int: usize) -> Strategy {
    let (kind, rationale) = if k_c > 6 {
        (StrategyKind::FoldOver, format!("{k_c} critical factors exceed 6"))
    } else if n_int >= 1 && k_c <= 5 {
        (
            StrategyKind::FullFactorial,
            format!("{n_int} interaction(s) among {k_c} critical factors: full factorial"),
        )
    } else if n_int >= 1 {
        (
            StrategyKind::ResV,
            format!("{n_int} interaction(s) among {k_c} critical factors: resolution-V half fraction"),
        )
    } else if k_c <= 3 {
        (
            StrategyKind::Star,
            format!("no interactions and {k_c} critical factor(s): axial points for curvature"),
        )
    } else {
        (
            StrategyKind::FoldOver,
            format!("no interactions but {k_c} critical factors: fold-over fallback"),
        )
    };
    Strategy { kind, rationale }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    /// Clip axial levels to the unit cube.
    pub axial_clip: bool,
}

/// Phase-2 block in `k`-factor space. Non-critical coordinates stay at 0 for
/// strategies A–C, and rows that repeat a Phase-1 run are dropped. Strategy D
/// negates every non-center Phase-1 row and keeps the result whole.
pub fn build_augmentation(
    strategy: &Strategy,
    cls: &FactorClassification,
    phase1: &Design,
    opts: AugmentOptions,
) -> Result<Design> {
    let k = phase1.k;
    let crit = &cls.critical_set;
    if crit.iter().any(|&c| c >= k) {
        return Err(Error::Shape(format!("critical factor outside 0..{k}")));
    }
    let block = match strategy.kind {
        StrategyKind::FullFactorial => full_factorial(crit.len())?.embed(k, crit),
        StrategyKind::ResV => half_fraction_res_v(crit.len())?.embed(k, crit),
        StrategyKind::Star => {
            let alpha = (crit.len() as f64).sqrt();
            let mut d = star_points(crit.len(), alpha)?.embed(k, crit);
            if opts.axial_clip {
                for r in &mut d.rows {
                    r.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
                }
            }
            d
        }
        StrategyKind::FoldOver => return Ok(fold_over(phase1).with_phase(Phase::P2)),
    };
    Ok(block.with_phase(Phase::P2).without_rows_in(&phase1.rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedModel {
    pub beta: Coefficients,
    pub column_spec: Vec<String>,
    pub lambda: f64,
    pub diagnostics: RegressionDiagnostics,
    pub interactions: Vec<(usize, usize)>,
    /// `(factor, training mean of its square)` for each centered quadratic column.
    pub quadratics: Vec<(usize, f64)>,
}

impl CombinedModel {
    fn features(
        x: &[f64],
        interactions: &[(usize, usize)],
        quadratics: &[(usize, f64)],
    ) -> Vec<f64> {
        let mut f = x.to_vec();
        f.extend(interactions.iter().map(|&(i, j)| x[i] * x[j]));
        f.extend(quadratics.iter().map(|&(i, c)| x[i] * x[i] - c));
        f
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.beta
            .predict(&Self::features(x, &self.interactions, &self.quadratics))
    }
}

/// Ridge fit of `[main effects | significant interaction products | centered
/// squares of critical factors]`; squares only when requested and the
/// strategy was C.
pub fn fit_combined(
    rows: &[Vec<f64>],
    y: &[f64],
    cls: &FactorClassification,
    strategy: StrategyKind,
    include_quadratics: bool,
    lambda: f64,
) -> Result<CombinedModel> {
    let k = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Degenerate("no runs".into()))?;
    let interactions = cls.significant_interactions.clone();
    let quadratics: Vec<(usize, f64)> = if include_quadratics && strategy == StrategyKind::Star {
        cls.critical_set
            .iter()
            .map(|&i| {
                let c = rows.iter().map(|r| r[i] * r[i]).sum::<f64>() / rows.len() as f64;
                (i, c)
            })
            .collect()
    } else {
        Vec::new()
    };
    let features: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| CombinedModel::features(r, &interactions, &quadratics))
        .collect();
    let x = Matrix::from_rows(&features)?;
    let (beta, diagnostics) = ridge_fit_with_se(&x, y, lambda)?;
    let mut column_spec: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    column_spec.extend(
        interactions
            .iter()
            .map(|(i, j)| format!("x{}*x{}", i + 1, j + 1)),
    );
    column_spec.extend(quadratics.iter().map(|(i, _)| format!("x{}^2", i + 1)));
    Ok(CombinedModel {
        beta,
        column_spec,
        lambda,
        diagnostics,
        interactions,
        quadratics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{mdsd, RowTag};
    use crate::numkit::RandomStream;
    use crate::screening::FactorLabel;

    fn cls(k: usize, critical: &[usize], interactions: &[(usize, usize)]) -> FactorClassification {
        let labels = (0..k)
            .map(|i| {
                if critical.contains(&i) {
                    FactorLabel::Critical
                } else {
                    FactorLabel::Negligible
                }
            })
            .collect();
        FactorClassification {
            labels,
            critical_set: critical.to_vec(),
            k_c: critical.len(),
            significant_interactions: interactions.to_vec(),
            n_int: interactions.len(),
            tau_p: 1.0,
            tau_a: 1.0,
            tau_crit: 1.0,
            promoted: None,
        }
    }

    #[test]
    fn decision_table_examples() {
        assert_eq!(select_strategy(4, 2).kind, StrategyKind::FullFactorial);
        assert_eq!(select_strategy(6, 1).kind, StrategyKind::ResV);
        assert_eq!(select_strategy(5, 0).kind, StrategyKind::FoldOver);
        assert_eq!(select_strategy(7, 0).kind, StrategyKind::FoldOver);
        assert_eq!(select_strategy(7, 3).kind, StrategyKind::FoldOver);
        assert_eq!(select_strategy(3, 0).kind, StrategyKind::Star);
        assert_eq!(select_strategy(0, 0).kind, StrategyKind::Star);
    }

    #[test]
    fn decision_table_is_total_and_buildable() {
        for k_c in 0..=20 {
            for n_int in 0..=190 {
                let s = select_strategy(k_c, n_int);
                match s.kind {
                    StrategyKind::FullFactorial => assert!(k_c <= 5 && n_int >= 1),
                    StrategyKind::ResV => assert!(k_c == 6 && n_int >= 1),
                    StrategyKind::Star => assert!(k_c <= 3 && n_int == 0),
                    StrategyKind::FoldOver => {
                        assert!(k_c > 6 || (n_int == 0 && (4..=6).contains(&k_c)))
                    }
                }
            }
        }
    }

    #[test]
    fn full_factorial_embedding() {
        let p1 = mdsd(6, &mut RandomStream::new(1)).unwrap();
        let c = cls(6, &[0, 3], &[(0, 3)]);
        let d = build_augmentation(&select_strategy(2, 1), &c, &p1, AugmentOptions::default())
            .unwrap();
        assert_eq!(d.phase, Phase::P2);
        assert!(d.len() <= 4);
        for r in &d.rows {
            for j in [1, 2, 4, 5] {
                assert_eq!(r[j], 0.0);
            }
        }
    }

    #[test]
    fn star_embedding() {
        let p1 = mdsd(6, &mut RandomStream::new(2)).unwrap();
        let c = cls(6, &[1, 2, 5], &[]);
        let d = build_augmentation(&select_strategy(3, 0), &c, &p1, AugmentOptions::default())
            .unwrap();
        assert_eq!(d.len(), 6);
        let a = 3f64.sqrt();
        for r in &d.rows {
            let nz: Vec<usize> = (0..6).filter(|&j| r[j] != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert!([1, 2, 5].contains(&nz[0]));
            assert_eq!(r[nz[0]].abs(), a);
        }
        let clipped = build_augmentation(
            &select_strategy(3, 0),
            &c,
            &p1,
            AugmentOptions { axial_clip: true },
        )
        .unwrap();
        assert!(clipped.rows.iter().flatten().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn fold_over_keeps_all_negated_rows() {
        let p1 = mdsd(6, &mut RandomStream::new(3)).unwrap();
        let c = cls(6, &[0, 1, 2, 3, 4], &[]);
        let d = build_augmentation(&select_strategy(5, 0), &c, &p1, AugmentOptions::default())
            .unwrap();
        assert_eq!(d.len(), 14);
        assert!(d.row_tags.iter().all(|t| *t == RowTag::Foldover));
    }

    #[test]
    fn resv_drops_phase1_duplicates() {
        let p1 = mdsd(6, &mut RandomStream::new(4)).unwrap();
        let c = cls(6, &[0, 1, 2, 3, 4, 5], &[(0, 1)]);
        let d = build_augmentation(&select_strategy(6, 1), &c, &p1, AugmentOptions::default())
            .unwrap();
        // both corners satisfy x1·…·x6 = +1
        assert!(d.len() <= 30);
        for r in &d.rows {
            assert!(!p1.rows.contains(r));
        }
    }

    #[test]
    fn combined_columns() {
        let rows = full_factorial(3).unwrap().rows;
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let m = fit_combined(&rows, &y, &cls(3, &[0], &[]), StrategyKind::FullFactorial, false, 0.1)
            .unwrap();
        assert_eq!(m.column_spec, vec!["x1", "x2", "x3"]);
        let m = fit_combined(
            &rows,
            &y,
            &cls(3, &[0, 1], &[(0, 1)]),
            StrategyKind::FullFactorial,
            false,
            0.1,
        )
        .unwrap();
        assert_eq!(m.column_spec, vec!["x1", "x2", "x3", "x1*x2"]);
    }

    #[test]
    fn combined_shrinkage_on_orthogonal_columns() {
        // 2⁶ factorial: every column has squared norm 64, so ridge shrinks
        // the OLS coefficient by 64/(64+λ).
        let rows: Vec<Vec<f64>> = (0..64usize)
            .map(|idx| {
                (0..6)
                    .map(|j| if idx >> (5 - j) & 1 == 1 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 2.0 * r[0] * r[1]).collect();
        let m = fit_combined(
            &rows,
            &y,
            &cls(6, &[0, 1], &[(0, 1)]),
            StrategyKind::FullFactorial,
            false,
            COMBINED_LAMBDA,
        )
        .unwrap();
        assert_eq!(m.column_spec.len(), 7);
        let shrink = 64.0 / (64.0 + 0.1);
        assert!((m.beta.values[0] - 3.0 * shrink).abs() < 1e-8);
        assert!((m.beta.values[6] - 2.0 * shrink).abs() < 1e-8);
        assert!((2.97..=3.0).contains(&m.beta.values[0]));
        assert!((1.97..=2.0).contains(&m.beta.values[6]));
        for j in 1..6 {
            assert!(m.beta.values[j].abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_columns_only_for_star() {
        let mut rows = full_factorial(2).unwrap().rows;
        rows.extend(star_points(2, 2f64.sqrt()).unwrap().rows);
        rows.push(vec![0.0, 0.0]);
        let y: Vec<f64> = rows.iter().map(|r| r[0] - 2.0 * r[0] * r[0]).collect();
        let c = cls(2, &[0, 1], &[]);
        let m = fit_combined(&rows, &y, &c, StrategyKind::Star, true, 1e-9).unwrap();
        assert_eq!(m.column_spec, vec!["x1", "x2", "x1^2", "x2^2"]);
        assert!((m.predict(&[0.5, 0.3]) - (0.5 - 0.5)).abs() < 1e-6);
        let m = fit_combined(&rows, &y, &c, StrategyKind::FullFactorial, true, 0.1).unwrap();
        assert_eq!(m.column_spec.len(), 2);
    }
}
