//! Turning a tool profile into operating curves.
//!
//! An [`Evaluator`] encodes (or pretends to encode) every requested sequence
//! at every QP under a profile and reports one [`RdCurve`] per sequence.

mod cache;
mod pipeline;
mod synthetic;

use thiserror::Error;

use crate::bdmetrics::{BdError, RdCurve};
use crate::measurement::MeasureError;
use crate::profiles::{ProfileError, ToolProfile};

pub use cache::{CacheStats, CachedEvaluator};
pub use pipeline::{ParseRule, PipelineConfig, PipelineEvaluator, Stage};
pub use synthetic::{Interaction, LandscapeSpec, SyntheticLandscape, ToolEffect};

/// The customary four operating points.
pub const DEFAULT_QPS: [i32; 4] = [22, 27, 32, 37];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid curve for profile {profile_id}, sequence {sequence}: {source}")]
    Curve {
        profile_id: String,
        sequence: String,
        #[source]
        source: BdError,
    },
    #[error("profile {profile_id}, sequence {sequence}, QP {qp}: {stage} failed: {detail}")]
    Stage {
        profile_id: String,
        sequence: String,
        qp: i32,
        stage: Stage,
        detail: String,
    },
    #[error("profile {profile_id}, sequence {sequence}, QP {qp}: measurement failed: {source}")]
    Measurement {
        profile_id: String,
        sequence: String,
        qp: i32,
        #[source]
        source: MeasureError,
    },
    #[error("profile {profile_id}, sequence {sequence}, QP {qp}: energy did not converge after {m} runs")]
    NonConverged {
        profile_id: String,
        sequence: String,
        qp: i32,
        m: usize,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
}

impl EvalError {
    /// True for errors that stem from energy measurement not converging.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, EvalError::NonConverged { .. })
    }
}

/// Whether an evaluator may serve concurrent calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purity {
    /// Deterministic and free of shared state; safe to call concurrently.
    PureParallel,
    /// Owns the machine (e.g. measures energy); calls must be serialized.
    ExclusiveSerial,
}

pub trait Evaluator: Send + Sync {
    /// One curve per sequence, one point per QP, in request order.
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError>;

    fn purity(&self) -> Purity;

    /// Short human-readable description for reports.
    fn describe(&self) -> String;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError> {
        (**self).analyze(profile, sequences, qps)
    }

    fn purity(&self) -> Purity {
        (**self).purity()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for std::sync::Arc<E> {
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError> {
        (**self).analyze(profile, sequences, qps)
    }

    fn purity(&self) -> Purity {
        (**self).purity()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

pub(crate) fn check_request(sequences: &[String], qps: &[i32]) -> Result<(), EvalError> {
    if sequences.is_empty() {
        return Err(EvalError::InvalidRequest("no sequences requested".into()));
    }
    if qps.is_empty() {
        return Err(EvalError::InvalidRequest("no QPs requested".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = qps.iter().find(|q| !seen.insert(**q)) {
        return Err(EvalError::InvalidRequest(format!("duplicate QP {dup}")));
    }
    Ok(())
}
