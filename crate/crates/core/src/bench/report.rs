use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Method, Metrics};
use crate::error::{Error, Result};
use crate::numkit::{mean, welch_t_test};

pub const CSV_HEADER: &str = "method,scenario,seed,da,pe,runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_da: f64,
    pub mean_pe: f64,
    pub mean_runs: f64,
    pub replications: usize,
    /// Mean DA per scenario, in scenario-name order.
    pub da_by_scenario: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchComparison {
    pub method: Method,
    pub hasod_mean_da: f64,
    pub other_mean_da: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<Metrics>,
    pub summaries: Vec<MethodSummary>,
    pub comparisons: Vec<WelchComparison>,
}

/// Pools metrics per method and compares HASOD detection accuracy against each
/// other method with Welch's t-test. Input order does not matter.
pub fn aggregate_report(all: &[Metrics]) -> Result<BenchReport> {
    let mut rows = all.to_vec();
    rows.sort_by(|a, b| (a.method, &a.scenario, a.seed).cmp(&(b.method, &b.scenario, b.seed)));

    let mut groups: BTreeMap<(Method, &str), Vec<&Metrics>> = BTreeMap::new();
    for m in &rows {
        groups.entry((m.method, &m.scenario)).or_default().push(m);
    }
    if let Some(((method, scenario), _)) = groups.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::InsufficientReplications(format!("{method}/{scenario}")));
    }

    let mut by_method: BTreeMap<Method, Vec<&Metrics>> = BTreeMap::new();
    for m in &rows {
        by_method.entry(m.method).or_default().push(m);
    }
    let summaries: Vec<MethodSummary> = by_method
        .iter()
        .map(|(&method, ms)| {
            let pick = |f: fn(&Metrics) -> f64| mean(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
            let da_by_scenario = groups
                .iter()
                .filter(|((gm, _), _)| *gm == method)
                .map(|((_, s), v)| {
                    (s.to_string(), mean(&v.iter().map(|m| m.da).collect::<Vec<_>>()))
                })
                .collect();
            MethodSummary {
                method,
                mean_da: pick(|m| m.da),
                mean_pe: pick(|m| m.pe),
                mean_runs: pick(|m| m.total_runs as f64),
                replications: ms.len(),
                da_by_scenario,
            }
        })
        .collect();

    let da_of = |method: Method| -> Vec<f64> {
        by_method.get(&method).map_or_else(Vec::new, |v| v.iter().map(|m| m.da).collect())
    };
    let hasod = da_of(Method::Hasod);
    let mut comparisons = Vec::new();
    if !hasod.is_empty() {
        for &method in by_method.keys().filter(|m| **m != Method::Hasod) {
            let other = da_of(method);
            let t = welch_t_test(&hasod, &other)?;
            comparisons.push(WelchComparison {
                method,
                hasod_mean_da: mean(&hasod),
                other_mean_da: mean(&other),
                t: t.t,
                df: t.df,
                p: t.p,
            });
        }
    }
    Ok(BenchReport {
        rows,
        summaries,
        comparisons,
    })
}

impl BenchReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn comparison(&self, method: Method) -> Option<&WelchComparison> {
        self.comparisons.iter().find(|c| c.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for m in &self.rows {
            writeln!(out, "{},{},{},{},{},{}", m.method, m.scenario, m.seed, m.da, m.pe, m.total_runs)
                .expect("string write");
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Benchmark report\n\n");
        s.push_str("| Method | Detection Acc. | Pred. Error | Total Runs | Replications |\n");
        s.push_str("|---|---:|---:|---:|---:|\n");
        for m in &self.summaries {
            writeln!(
                s,
                "| {} | {:.4} | {:.3} | {:.1} | {} |",
                m.method, m.mean_da, m.mean_pe, m.mean_runs, m.replications
            )
            .expect("string write");
        }

        let scenarios: Vec<&str> = self
            .summaries
            .iter()
            .flat_map(|m| m.da_by_scenario.iter().map(|(n, _)| n.as_str()))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        s.push_str("\n## Detection accuracy by scenario\n\n| Method |");
        for n in &scenarios {
            write!(s, " {n} |").expect("string write");
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(scenarios.len()));
        s.push('\n');
        for m in &self.summaries {
            write!(s, "| {} |", m.method).expect("string write");
            for n in &scenarios {
                match m.da_by_scenario.iter().find(|(x, _)| x == n) {
                    Some((_, v)) => write!(s, " {v:.3} |"),
                    None => write!(s, " - |"),
                }
                .expect("string write");
            }
            s.push('\n');
        }

        s.push_str("\n## Welch t-tests on detection accuracy (HASOD vs method)\n\n");
        if self.comparisons.is_empty() {
            s.push_str("No comparisons.\n");
        } else {
            s.push_str("| Method | HASOD mean | Method mean | t | df | p |\n");
            s.push_str("|---|---:|---:|---:|---:|---:|\n");
            for c in &self.comparisons {
                writeln!(
                    s,
                    "| {} | {:.4} | {:.4} | {:.3} | {:.1} | {:.3e} |",
                    c.method, c.hasod_mean_da, c.other_mean_da, c.t, c.df, c.p
                )
                .expect("string write");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(method: Method, scenario: &str, seed: u64, da: f64) -> Metrics {
        Metrics {
            method,
            scenario: scenario.into(),
            seed,
            da,
            pe: 1.0,
            total_runs: 40,
        }
    }

    #[test]
    fn hasod_only_has_no_tests() {
        let r = aggregate_report(&[m(Method::Hasod, "a", 1, 1.0), m(Method::Hasod, "a", 2, 0.5)]).unwrap();
        assert!(r.comparisons.is_empty());
        assert_eq!(r.summary(Method::Hasod).unwrap().mean_da, 0.75);
        assert!(r.to_markdown().contains("No comparisons."));
    }

    #[test]
    fn needs_two_replications() {
        let e = aggregate_report(&[m(Method::Lhs, "a", 1, 0.0)]).unwrap_err();
        assert_eq!(e, Error::InsufficientReplications("LHS/a".into()));
    }

    #[test]
    fn order_independent_and_csv_shape() {
        let mut v = vec![
            m(Method::Hasod, "b", 2, 1.0),
            m(Method::Lhs, "b", 2, 0.0),
            m(Method::Hasod, "b", 1, 0.5),
            m(Method::Lhs, "b", 1, 0.0),
        ];
        let a = aggregate_report(&v).unwrap();
        v.reverse();
        let b = aggregate_report(&v).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("HASOD,b,1,0.5,1,40"));
        assert_eq!(csv.lines().count(), 5);
        let c = a.comparison(Method::Lhs).unwrap();
        assert!(c.t > 0.0 && c.p < 1.0);
    }
}
