//! Search over tool profiles.
//!
//! Every profile is scored by its BD metrics against the CTC profile on the
//! same sequences. The default objective is the mean BDDE over PSNR; lower is
//! better.

mod full;
mod greedy;
mod report;
mod select;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bdmetrics::{bd_result, BdSummary, InterpolationMethod, RdCurve};
use crate::evaluator::{EvalError, Evaluator, Purity};
use crate::profiles::{CodingConfig, ProfileError, ToolCatalog, ToolProfile};

pub use full::{full_search, FullSearch, MAX_SUBSET};
pub use greedy::{greedy_dse, AcceptMode, DseOptions, DseOutcome, DseState, Termination};
pub use report::{DseReport, ProfileSummary, REPORT_SCHEMA_VERSION};
pub use select::{
    pareto_front, pareto_indices, select_ebe, select_ee, sensitivity, EbeOptions, EbeSelection, SensitivityCategory,
    SensitivityEntry,
};

#[derive(Debug, Error)]
pub enum DseError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("evaluation aborted after {} trace records: {source}", trace.len())]
    Aborted {
        #[source]
        source: EvalError,
        trace: Vec<TraceRecord>,
    },
    #[error("subset of {size} tools is too large for exhaustive search (limit {max})")]
    SubsetTooLarge { size: usize, max: usize },
    #[error("no applicable tools to explore")]
    NoTools,
    #[error("no evaluated profiles to select from")]
    Empty,
    #[error("trace has no iteration-1 record for tool `{0}`")]
    MissingRecord(String),
    #[error("iteration-1 record for tool `{0}` has no objective value")]
    NoValue(String),
    #[error("no candidate has BDR below {cap}%; raise the BDR cap")]
    EmptyShortlist { cap: f64 },
    #[error("trace: {0}")]
    Trace(String),
}

/// Quantity minimized by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    BddePsnr,
    BddeVmaf,
}

impl Objective {
    pub fn value(self, bd: &BdSummary) -> Option<f64> {
        match self {
            Objective::BddePsnr => bd.bdde_psnr,
            Objective::BddeVmaf => bd.bdde_vmaf,
        }
    }

    /// BDR measured with the objective's quality metric.
    pub fn bdr(self, bd: &BdSummary) -> Option<f64> {
        match self {
            Objective::BddePsnr => bd.bdr_psnr,
            Objective::BddeVmaf => bd.bdr_vmaf,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::BddePsnr => "bdde-psnr",
            Objective::BddeVmaf => "bdde-vmaf",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bdde-psnr" => Ok(Objective::BddePsnr),
            "bdde-vmaf" => Ok(Objective::BddeVmaf),
            _ => Err(format!("unknown objective `{s}` (expected bdde-psnr or bdde-vmaf)")),
        }
    }
}

/// One scored profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub profile: ToolProfile,
    pub bits: String,
    pub curves: Vec<RdCurve>,
    /// Mean BD metrics against the baseline; absent when `error` is set.
    pub bd: Option<BdSummary>,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn id(&self) -> String {
        self.profile.id()
    }

    pub fn objective(&self, objective: Objective) -> Option<f64> {
        self.bd.as_ref().and_then(|b| objective.value(b))
    }

    pub fn bdr(&self, objective: Objective) -> Option<f64> {
        self.bd.as_ref().and_then(|b| objective.bdr(b))
    }
}

/// One line of the search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Toggled tool, or `reference`.
    pub tool: String,
    pub config: CodingConfig,
    pub profile_id: String,
    pub bits: String,
    pub bd: Option<BdSummary>,
    pub objective: Option<f64>,
    pub accepted: bool,
    pub error: Option<String>,
    pub evaluator_calls_so_far: u64,
}

pub const REFERENCE: &str = "reference";

pub fn write_trace<W: std::io::Write>(mut w: W, trace: &[TraceRecord]) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: std::io::BufRead>(r: R) -> Result<Vec<TraceRecord>, DseError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DseError::Trace(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DseError::Trace(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Shared evaluation context: evaluator, baseline curves and a memo so each
/// distinct profile reaches the evaluator once.
pub struct Explorer<'a> {
    evaluator: &'a dyn Evaluator,
    catalog: &'a ToolCatalog,
    config: CodingConfig,
    sequences: Vec<String>,
    qps: Vec<i32>,
    method: InterpolationMethod,
    baseline: ToolProfile,
    baseline_curves: BTreeMap<String, RdCurve>,
    memo: Mutex<HashMap<String, Evaluation>>,
    order: Mutex<Vec<String>>,
    calls: AtomicU64,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Explorer<'a> {
    /// Evaluates the CTC baseline; that evaluation counts as the first call.
    pub fn new(
        evaluator: &'a dyn Evaluator,
        catalog: &'a ToolCatalog,
        config: CodingConfig,
        sequences: Vec<String>,
        qps: Vec<i32>,
        method: InterpolationMethod,
    ) -> Result<Self, DseError> {
        let baseline = catalog.ctc_profile(config);
        let curves = evaluator.analyze(&baseline, &sequences, &qps)?;
        let ex = Explorer {
            evaluator,
            catalog,
            config,
            sequences,
            qps,
            method,
            baseline: baseline.clone(),
            baseline_curves: curves.iter().map(|c| (c.sequence.clone(), c.clone())).collect(),
            memo: Mutex::new(HashMap::new()),
            order: Mutex::new(Vec::new()),
            calls: AtomicU64::new(1),
            pool: None,
        };
        let eval = ex.score(baseline, curves);
        ex.insert(eval);
        Ok(ex)
    }

    /// Runs up to `jobs` evaluations concurrently when the evaluator allows it.
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.pool = (jobs > 1 && self.evaluator.purity() == Purity::PureParallel).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("thread pool")
        });
        self
    }

    pub fn catalog(&self) -> &ToolCatalog {
        self.catalog
    }

    pub fn config(&self) -> CodingConfig {
        self.config
    }

    pub fn baseline(&self) -> &ToolProfile {
        &self.baseline
    }

    pub fn sequences(&self) -> &[String] {
        &self.sequences
    }

    pub fn qps(&self) -> &[i32] {
        &self.qps
    }

    pub fn method(&self) -> InterpolationMethod {
        self.method
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        self.evaluator
    }

    /// Number of distinct profiles sent to the evaluator so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every distinct evaluation, in the order it was first made.
    pub fn evaluations(&self) -> Vec<Evaluation> {
        let memo = self.memo.lock().expect("memo lock");
        self.order
            .lock()
            .expect("memo lock")
            .iter()
            .map(|h| memo[h].clone())
            .collect()
    }

    fn score(&self, profile: ToolProfile, curves: Vec<RdCurve>) -> Evaluation {
        let bits = self.catalog.bit_string(&profile);
        let mut summaries = Vec::with_capacity(curves.len());
        let mut error = None;
        for c in &curves {
            let Some(base) = self.baseline_curves.get(&c.sequence) else {
                error = Some(format!("no baseline curve for sequence {}", c.sequence));
                break;
            };
            match bd_result(base, c, self.method) {
                Ok(r) => summaries.push(r.summary()),
                Err(e) => {
                    error = Some(format!("sequence {}: {e}", c.sequence));
                    break;
                }
            }
        }
        let bd = if error.is_none() { BdSummary::mean(&summaries) } else { None };
        if bd.is_none() && error.is_none() {
            error = Some("no curves to compare".into());
        }
        Evaluation {
            profile,
            bits,
            curves,
            bd,
            error,
        }
    }

    fn insert(&self, eval: Evaluation) {
        let hash = eval.profile.canonical_hash();
        let mut memo = self.memo.lock().expect("memo lock");
        if memo.insert(hash.clone(), eval).is_none() {
            self.order.lock().expect("memo lock").push(hash);
        }
    }

    fn cached(&self, profile: &ToolProfile) -> Option<Evaluation> {
        self.memo.lock().expect("memo lock").get(&profile.canonical_hash()).cloned()
    }

    pub fn evaluate(&self, profile: &ToolProfile) -> Result<Evaluation, EvalError> {
        Ok(self.evaluate_many(std::slice::from_ref(profile))?.remove(0))
    }

    /// Evaluates `profiles`, returning results in input order. New profiles
    /// are counted and stored in input order whether or not they ran in
    /// parallel.
    pub fn evaluate_many(&self, profiles: &[ToolProfile]) -> Result<Vec<Evaluation>, EvalError> {
        let mut fresh: Vec<&ToolProfile> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for p in profiles {
            self.catalog.validate(p)?;
            if self.cached(p).is_none() && seen.insert(p.canonical_hash()) {
                fresh.push(p);
            }
        }
        let run = |p: &&ToolProfile| self.evaluator.analyze(p, &self.sequences, &self.qps);
        let results: Vec<Result<Vec<RdCurve>, EvalError>> = match &self.pool {
            Some(pool) if fresh.len() > 1 => pool.install(|| fresh.par_iter().map(run).collect()),
            _ => {
                // Serial evaluation stops at the first failure.
                let mut out = Vec::with_capacity(fresh.len());
                for p in &fresh {
                    let r = run(p);
                    let failed = r.is_err();
                    out.push(r);
                    if failed {
                        break;
                    }
                }
                out
            }
        };
        for (p, r) in fresh.iter().zip(results) {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let eval = self.score((*p).clone(), r?);
            self.insert(eval);
        }
        Ok(profiles
            .iter()
            .map(|p| self.cached(p).expect("evaluated above"))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{LandscapeSpec, SyntheticLandscape, DEFAULT_QPS};

    #[test]
    fn objective_parsing() {
        assert_eq!("bdde-psnr".parse::<Objective>().unwrap(), Objective::BddePsnr);
        assert_eq!("BDDE-VMAF".parse::<Objective>().unwrap(), Objective::BddeVmaf);
        assert!("bdr".parse::<Objective>().is_err());
        assert_eq!(serde_json::to_string(&Objective::BddeVmaf).unwrap(), "\"bdde-vmaf\"");
    }

    #[test]
    fn explorer_counts_distinct_profiles() {
        let cat = ToolCatalog::builtin();
        let land =
            SyntheticLandscape::new(LandscapeSpec::random_separable(CodingConfig::RA, &["GPM", "ALF"], 1), cat).unwrap();
        let ex = Explorer::new(
            &land,
            cat,
            CodingConfig::RA,
            vec!["s".into()],
            DEFAULT_QPS.to_vec(),
            InterpolationMethod::Pchip,
        )
        .unwrap();
        assert_eq!(ex.calls(), 1);
        let base = ex.baseline().clone();
        let g = base.toggle("GPM").unwrap();
        let evals = ex.evaluate_many(&[g.clone(), base.clone(), g.clone()]).unwrap();
        assert_eq!(ex.calls(), 2);
        assert_eq!(evals.len(), 3);
        assert_eq!(evals[1].objective(Objective::BddePsnr), Some(0.0));
        assert_eq!(ex.evaluations().len(), 2);
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let rec = TraceRecord {
            iteration: 1,
            tool: "DBF".into(),
            config: CodingConfig::AI,
            profile_id: "AI-0123".into(),
            bits: "1010".into(),
            bd: None,
            objective: Some(-17.29),
            accepted: true,
            error: None,
            evaluator_calls_so_far: 2,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), vec![rec.clone(), rec]);
        assert!(read_trace("{not json}\n".as_bytes()).is_err());
    }
}
