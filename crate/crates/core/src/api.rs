//! Wire types shared by the HTTP service, its client and the CLI.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::screening::FactorLabel;
use crate::session::{SessionConfig, SessionPhase, SessionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionSummary {
    pub id: String,
    pub phase: SessionPhase,
    pub k: usize,
    pub pending_run_count: usize,
    /// RFC 3339, UTC.
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub k: usize,
    pub seed: u64,
    /// Partial [`SessionConfig`]; `de` may itself be partial.
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub config: Map<String, Value>,
}

impl CreateSessionRequest {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            config: Map::new(),
        }
    }

    /// Defaults for `(k, seed)` with the overrides applied on top.
    pub fn session_config(&self) -> Result<SessionConfig> {
        let mut base = serde_json::to_value(SessionConfig::new(self.k, self.seed))?;
        let fields = base.as_object_mut().expect("config is an object");
        for (key, v) in &self.config {
            match (key.as_str(), fields.get_mut(key)) {
                ("k" | "seed", _) | (_, None) => {
                    return Err(Error::InvalidConfig(format!("unknown or fixed config key {key:?}")))
                }
                ("de", Some(Value::Object(de))) => {
                    let Value::Object(patch) = v else {
                        return Err(Error::InvalidConfig("de must be an object".into()));
                    };
                    for (dk, dv) in patch {
                        if !de.contains_key(dk) {
                            return Err(Error::InvalidConfig(format!("unknown de key {dk:?}")));
                        }
                        de.insert(dk.clone(), dv.clone());
                    }
                }
                (_, Some(slot)) => *slot = v.clone(),
            }
        }
        serde_json::from_value(base).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Stable error name, e.g. `DuplicateResponse`.
    pub error: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        Self {
            error: e.name().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub critical_set: Vec<usize>,
    pub significant_interactions: Vec<(usize, usize)>,
    pub labels: Vec<FactorLabel>,
    pub cwess: Vec<f64>,
    pub tau_crit: f64,
    pub promoted: Option<usize>,
}

/// Phase and classification overview of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusView {
    pub phase: SessionPhase,
    pub k: usize,
    pub seed: u64,
    pub total_runs: usize,
    pub pending_run_count: usize,
    pub classification: Option<ClassificationSummary>,
    pub strategy: Option<String>,
}

impl StatusView {
    pub fn of(s: &SessionState) -> Self {
        let classification = s
            .classification
            .as_ref()
            .zip(s.screening.as_ref())
            .map(|(c, r)| ClassificationSummary {
                critical_set: c.critical_set.clone(),
                significant_interactions: c.significant_interactions.clone(),
                labels: c.labels.clone(),
                cwess: r.cwess.clone(),
                tau_crit: c.tau_crit,
                promoted: c.promoted,
            });
        Self {
            phase: s.phase,
            k: s.k(),
            seed: s.config.seed,
            total_runs: s.total_runs(),
            pending_run_count: s.pending_count(),
            classification,
            strategy: s.strategy.as_ref().map(|st| st.kind.as_str().to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req(v: Value) -> CreateSessionRequest {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn overrides_apply_on_defaults() {
        let c = req(json!({"k": 4, "seed": 9, "config": {"n3": 3, "de": {"max_generations": 50}}}))
            .session_config()
            .unwrap();
        assert_eq!((c.k, c.seed, c.n3, c.de.max_generations), (4, 9, 3, 50));
        assert_eq!(c.de.f_weight, SessionConfig::new(4, 9).de.f_weight);
        assert_eq!(req(json!({"k": 6, "seed": 1})).session_config().unwrap(), SessionConfig::new(6, 1));
    }

    #[test]
    fn bad_overrides_are_rejected() {
        for bad in [
            json!({"k": 4, "seed": 1, "config": {"bogus": 1}}),
            json!({"k": 4, "seed": 1, "config": {"k": 5}}),
            json!({"k": 4, "seed": 1, "config": {"n3": "six"}}),
            json!({"k": 4, "seed": 1, "config": {"de": {"nope": 1}}}),
        ] {
            assert!(matches!(req(bad).session_config(), Err(Error::InvalidConfig(_))));
        }
        assert!(serde_json::from_value::<CreateSessionRequest>(json!({"k": 4, "seed": 1, "x": 0})).is_err());
    }
}
