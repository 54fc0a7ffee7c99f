//! Live three-phase session: propose runs, take measured responses, and run
//! each phase's analytics as soon as its block of runs is fully answered.
//!
//! A [`SessionState`] is a value. Every mutation returns a new state and
//! leaves the old one untouched, so a rejected batch never half-applies.

mod canonical;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use canonical::to_canonical_json;

use crate::augment::{
    build_augmentation, fit_combined, select_strategy, AugmentOptions, CombinedModel, Strategy,
    COMBINED_LAMBDA,
};
use crate::design::{mdsd, Design, Phase, RowTag, MAX_FACTORS, MIN_FACTORS};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, RandomStream, RNG_ALGORITHM};
use crate::optimize::{locate_optimum, refinement_points, DEConfig, OptimumEstimate};
use crate::screening::{
    classify_factors, cwess_scores, FactorClassification, ScreeningConfig, ScreeningReport,
};
use crate::surrogate::{gp_fit, GpModel, KernelParams, BOUNDS_VERSION};

pub const SCHEMA_VERSION: &str = "hasod-session/1";

// child indices of the session's root stream
const STREAM_SCREEN: u64 = 1;
const STREAM_GP_P2: u64 = 2;
const STREAM_DE_P2: u64 = 3;
const STREAM_REFINE: u64 = 4;
const STREAM_GP_FINAL: u64 = 5;
const STREAM_DE_FINAL: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub k: usize,
    pub seed: u64,
    pub elasticnet_lambda: f64,
    pub elasticnet_alpha: f64,
    pub se_lambda: f64,
    pub combined_lambda: f64,
    pub epsilon: f64,
    pub n3: usize,
    pub region_halfwidth: f64,
    pub axial_clip: bool,
    pub include_quadratics_on_c: bool,
    pub de: DEConfig,
}

impl SessionConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        let s = ScreeningConfig::default();
        Self {
            k,
            seed,
            elasticnet_lambda: s.elasticnet_lambda,
            elasticnet_alpha: s.elasticnet_alpha,
            se_lambda: s.se_lambda,
            combined_lambda: COMBINED_LAMBDA,
            epsilon: s.epsilon,
            n3: 6,
            region_halfwidth: 0.3,
            axial_clip: false,
            include_quadratics_on_c: true,
            de: DEConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < MIN_FACTORS {
            return Err(Error::KTooSmall(self.k));
        }
        if self.k > MAX_FACTORS {
            return Err(Error::KTooLarge(self.k));
        }
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if !(self.elasticnet_lambda >= 0.0) || !(0.0..=1.0).contains(&self.elasticnet_alpha) {
            return bad("elastic net lambda must be >= 0 and alpha in [0, 1]");
        }
        if !(self.se_lambda > 0.0) || !(self.combined_lambda > 0.0) {
            return bad("ridge lambdas must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.n3 == 0 {
            return bad("n3 must be at least 1");
        }
        if !(self.region_halfwidth > 0.0) {
            return bad("region_halfwidth must be positive");
        }
        self.de.validate()
    }

    pub fn screening(&self) -> ScreeningConfig {
        ScreeningConfig {
            elasticnet_lambda: self.elasticnet_lambda,
            elasticnet_alpha: self.elasticnet_alpha,
            se_lambda: self.se_lambda,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    AwaitP1Responses,
    AwaitP2Responses,
    AwaitP3Responses,
    Complete,
}

impl SessionPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionPhase::AwaitP1Responses => "AwaitP1Responses",
            SessionPhase::AwaitP2Responses => "AwaitP2Responses",
            SessionPhase::AwaitP3Responses => "AwaitP3Responses",
            SessionPhase::Complete => "Complete",
        }
    }
}

impl std::fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One phase's runs with a response slot per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBlock {
    pub phase_tag: Phase,
    pub rows: Vec<Vec<f64>>,
    pub row_tags: Vec<RowTag>,
    pub responses: Vec<Option<f64>>,
}

impl DesignBlock {
    fn from_design(d: Design) -> Self {
        let n = d.rows.len();
        Self {
            phase_tag: d.phase,
            rows: d.rows,
            row_tags: d.row_tags,
            responses: vec![None; n],
        }
    }

    fn to_design(&self, k: usize) -> Design {
        Design {
            k,
            rows: self.rows.clone(),
            row_tags: self.row_tags.clone(),
            phase: self.phase_tag,
        }
    }

    fn is_complete(&self) -> bool {
        self.responses.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub bounds_version: String,
    /// Fitted on Phase-1 and Phase-2 runs.
    pub phase2: KernelParams,
    /// Refitted on every run once Phase 3 is answered.
    #[serde(rename = "final")]
    pub final_fit: Option<KernelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumRecord {
    pub phase2: OptimumEstimate,
    #[serde(rename = "final")]
    pub final_estimate: Option<OptimumEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HasodResult {
    pub x_star: Vec<f64>,
    pub predicted_y: f64,
    pub predicted_sd: f64,
    pub critical_factors: Vec<usize>,
    pub significant_interactions: Vec<(usize, usize)>,
    pub total_runs: usize,
    pub strategy_used: String,
    /// Posterior variance of the Phase-2 model at the Phase-2 optimum.
    pub variance_before: f64,
    /// Same model and point after conditioning on the refinement inputs.
    pub variance_after_at_old_xstar: f64,
    /// Final model's variance at the final optimum.
    pub variance_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub schema_version: String,
    pub config: SessionConfig,
    pub phase: SessionPhase,
    pub designs: Vec<DesignBlock>,
    pub screening: Option<ScreeningReport>,
    pub classification: Option<FactorClassification>,
    pub strategy: Option<Strategy>,
    pub combined: Option<CombinedModel>,
    pub gp: Option<GpRecord>,
    pub optimum: Option<OptimumRecord>,
    pub result: Option<HasodResult>,
    pub rng_algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRun {
    pub row_id: usize,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub row_id: usize,
    pub y: f64,
}

pub fn create_session(config: SessionConfig) -> Result<SessionState> {
    config.validate()?;
    let root = RandomStream::new(config.seed);
    let p1 = mdsd(config.k, &mut root.child(STREAM_SCREEN))?;
    Ok(SessionState {
        schema_version: SCHEMA_VERSION.to_string(),
        config,
        phase: SessionPhase::AwaitP1Responses,
        designs: vec![DesignBlock::from_design(p1)],
        screening: None,
        classification: None,
        strategy: None,
        combined: None,
        gp: None,
        optimum: None,
        result: None,
        rng_algorithm: RNG_ALGORITHM.to_string(),
    })
}

impl SessionState {
    pub fn k(&self) -> usize {
        self.config.k
    }

    fn root(&self) -> RandomStream {
        RandomStream::new(self.config.seed)
    }

    /// `(block, offset)` of every row id, in id order.
    fn locate(&self, row_id: usize) -> Option<(usize, usize)> {
        let mut base = 0;
        for (b, block) in self.designs.iter().enumerate() {
            if row_id < base + block.rows.len() {
                return Some((b, row_id - base));
            }
            base += block.rows.len();
        }
        None
    }

    fn first_id_of(&self, block: usize) -> usize {
        self.designs[..block].iter().map(|b| b.rows.len()).sum()
    }

    pub fn total_rows(&self) -> usize {
        self.designs.iter().map(|b| b.rows.len()).sum()
    }

    /// Rows with a recorded response.
    pub fn total_runs(&self) -> usize {
        self.designs
            .iter()
            .flat_map(|b| &b.responses)
            .filter(|r| r.is_some())
            .count()
    }

    /// Unanswered rows of the current phase, with stable ids.
    pub fn propose_runs(&self) -> Result<Vec<PendingRun>> {
        if self.phase == SessionPhase::Complete {
            return Err(Error::SessionComplete);
        }
        let b = self.designs.len() - 1;
        let base = self.first_id_of(b);
        let block = &self.designs[b];
        Ok(block
            .rows
            .iter()
            .zip(&block.responses)
            .enumerate()
            .filter(|(_, (_, y))| y.is_none())
            .map(|(i, (row, _))| PendingRun {
                row_id: base + i,
                levels: row.clone(),
            })
            .collect())
    }

    pub fn pending_count(&self) -> usize {
        self.propose_runs().map_or(0, |p| p.len())
    }

    /// Records responses and, when the current block becomes complete, runs
    /// that phase's analytics. The batch is applied all-or-nothing.
    pub fn ingest_responses(&self, responses: &[Response]) -> Result<SessionState> {
        if self.phase == SessionPhase::Complete {
            return Err(Error::SessionComplete);
        }
        let mut next = self.clone();
        let current = next.designs.len() - 1;
        for r in responses {
            let (b, i) = next.locate(r.row_id).ok_or(Error::UnknownRowId(r.row_id))?;
            if next.designs[b].responses[i].is_some() {
                return Err(Error::DuplicateResponse(r.row_id));
            }
            if b != current {
                return Err(Error::WrongPhase(r.row_id));
            }
            if !r.y.is_finite() {
                return Err(Error::NonFiniteResponse(r.row_id));
            }
            next.designs[b].responses[i] = Some(r.y);
        }
        next.advance()?;
        Ok(next)
    }

    fn advance(&mut self) -> Result<()> {
        while self.phase != SessionPhase::Complete
            && self.designs.last().is_some_and(DesignBlock::is_complete)
        {
            match self.phase {
                SessionPhase::AwaitP1Responses => self.finish_phase1()?,
                SessionPhase::AwaitP2Responses => self.finish_phase2()?,
                SessionPhase::AwaitP3Responses => self.finish_phase3()?,
                SessionPhase::Complete => unreachable!(),
            }
        }
        Ok(())
    }

    /// Inputs and responses of the first `blocks` design blocks.
    fn observed(&self, blocks: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for block in &self.designs[..blocks] {
            for (row, r) in block.rows.iter().zip(&block.responses) {
                if let Some(v) = r {
                    x.push(row.clone());
                    y.push(*v);
                }
            }
        }
        (x, y)
    }

    fn finish_phase1(&mut self) -> Result<()> {
        let (rows, y) = self.observed(1);
        let report = cwess_scores(&Matrix::from_rows(&rows)?, &y, &self.config.screening())?;
        let cls = classify_factors(&report).ensure_nonempty(&report);
        let strategy = select_strategy(cls.k_c, cls.n_int);
        let opts = AugmentOptions {
            axial_clip: self.config.axial_clip,
        };
        let p2 = build_augmentation(&strategy, &cls, &self.designs[0].to_design(self.k()), opts)?;
        self.designs.push(DesignBlock::from_design(p2));
        self.screening = Some(report);
        self.classification = Some(cls);
        self.strategy = Some(strategy);
        self.phase = SessionPhase::AwaitP2Responses;
        Ok(())
    }

    fn finish_phase2(&mut self) -> Result<()> {
        let (rows, y) = self.observed(2);
        let cls = self.classification.as_ref().expect("phase 1 analytics");
        let kind = self.strategy.as_ref().expect("phase 1 analytics").kind;
        let combined = fit_combined(
            &rows,
            &y,
            cls,
            kind,
            self.config.include_quadratics_on_c,
            self.config.combined_lambda,
        )?;
        let root = self.root();
        let gp = gp_fit(&rows, &y, &root.child(STREAM_GP_P2))?;
        let de = self.config.de;
        let opt = locate_optimum(&gp, self.k(), &de, &mut root.child(STREAM_DE_P2))?;
        let p3 = refinement_points(
            &gp,
            &opt.x_star,
            self.config.n3,
            self.config.region_halfwidth,
            &de,
            &mut root.child(STREAM_REFINE),
        )?;
        self.designs.push(DesignBlock::from_design(p3));
        self.combined = Some(combined);
        self.gp = Some(GpRecord {
            bounds_version: BOUNDS_VERSION.to_string(),
            phase2: gp.params,
            final_fit: None,
        });
        self.optimum = Some(OptimumRecord {
            phase2: opt,
            final_estimate: None,
        });
        self.phase = SessionPhase::AwaitP3Responses;
        Ok(())
    }

    fn finish_phase3(&mut self) -> Result<()> {
        let root = self.root();
        let (rows, y) = self.observed(3);
        let gp = gp_fit(&rows, &y, &root.child(STREAM_GP_FINAL))?;
        let opt = locate_optimum(&gp, self.k(), &self.config.de, &mut root.child(STREAM_DE_FINAL))?;

        let record = self.gp.as_mut().expect("phase 2 analytics");
        let (rows12, y12) = {
            let n12 = self.designs[0].rows.len() + self.designs[1].rows.len();
            (rows[..n12].to_vec(), y[..n12].to_vec())
        };
        let before_model = GpModel::with_params(&rows12, &y12, record.phase2)?;
        let old = &self.optimum.as_ref().expect("phase 2 analytics").phase2.x_star;
        let variance_before = before_model.variance(old);
        let variance_after_at_old_xstar = before_model
            .condition_on_points(&self.designs[2].rows)?
            .variance(old);
        debug_assert!(variance_after_at_old_xstar <= variance_before + 1e-9);
        record.final_fit = Some(gp.params);

        let cls = self.classification.as_ref().expect("phase 1 analytics");
        let result = HasodResult {
            x_star: opt.x_star.clone(),
            predicted_y: opt.mu_at_x_star,
            predicted_sd: opt.var_at_x_star.sqrt(),
            critical_factors: cls.critical_set.clone(),
            significant_interactions: cls.significant_interactions.clone(),
            total_runs: rows.len(),
            strategy_used: self.strategy.as_ref().expect("phase 1").kind.to_string(),
            variance_before,
            variance_after_at_old_xstar,
            variance_after: opt.var_at_x_star,
        };
        self.optimum.as_mut().expect("phase 2").final_estimate = Some(opt);
        self.result = Some(result);
        self.phase = SessionPhase::Complete;
        Ok(())
    }

    pub fn finalize_report(&self) -> Result<HasodResult> {
        match (&self.phase, &self.result) {
            (SessionPhase::Complete, Some(r)) => Ok(r.clone()),
            _ => Err(Error::NotComplete),
        }
    }

    /// The current posterior: the Phase-2 model until Phase 3 is answered,
    /// the final model afterwards.
    pub fn current_model(&self) -> Result<GpModel> {
        let rec = self
            .gp
            .as_ref()
            .ok_or_else(|| Error::NotAvailable("surrogate".into()))?;
        match rec.final_fit {
            Some(p) => {
                let (x, y) = self.observed(3);
                GpModel::with_params(&x, &y, p)
            }
            None => {
                let (x, y) = self.observed(2);
                GpModel::with_params(&x, &y, rec.phase2)
            }
        }
    }

    /// Posterior mean and variance at `x`.
    pub fn surface(&self, x: &[f64]) -> Result<(f64, f64)> {
        if x.len() != self.k() {
            return Err(Error::Shape(format!("expected {} levels, got {}", self.k(), x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.current_model()?.predict(x)
    }

    /// Feeds this session's recorded responses, block by block, into a fresh
    /// session with the same configuration.
    pub fn replay(&self) -> Result<SessionState> {
        let mut s = create_session(self.config.clone())?;
        let mut base = 0;
        for block in &self.designs {
            let batch: Vec<Response> = block
                .responses
                .iter()
                .enumerate()
                .filter_map(|(i, y)| y.map(|y| Response { row_id: base + i, y }))
                .collect();
            base += block.rows.len();
            if !batch.is_empty() {
                s = s.ingest_responses(&batch)?;
            }
        }
        Ok(s)
    }

    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        to_canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let s: SessionState = serde_json::from_slice(bytes)?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(s.schema_version));
        }
        if s.rng_algorithm != RNG_ALGORITHM {
            return Err(Error::Schema(s.rng_algorithm));
        }
        if s.designs.is_empty() || s.designs.iter().any(|b| {
            b.rows.len() != b.responses.len()
                || b.rows.len() != b.row_tags.len()
                || b.rows.iter().any(|r| r.len() != s.config.k)
        }) {
            return Err(Error::Schema("inconsistent design blocks".into()));
        }
        Ok(s)
    }

    /// Atomic write: temp file in the target directory, fsync, rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_canonical_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read(path)?)
    }

    /// Pending runs as CSV: `run_id,f1,…,fk`.
    pub fn batch_csv(&self) -> Result<String> {
        let pending = self.propose_runs()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["run_id".to_string()];
        header.extend((1..=self.k()).map(|i| format!("f{i}")));
        w.write_record(&header)?;
        for p in pending {
            let mut rec = vec![p.row_id.to_string()];
            rec.extend(p.levels.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("ascii csv"))
    }
}

/// Parses a `run_id,y` response CSV.
pub fn parse_responses_csv(text: &str) -> Result<Vec<Response>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "run_id" || &headers[1] != "y" {
        return Err(Error::Parse(format!(
            "expected header run_id,y, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("expected 2 fields, got {}", rec.len())));
        }
        let row_id = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad run_id {:?}", &rec[0])))?;
        let y = rec[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad response {:?}", &rec[1])))?;
        out.push(Response { row_id, y });
    }
    Ok(out)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}
