//! Final report of a search run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AcceptMode, Evaluation, Objective, SensitivityEntry, Termination};
use crate::bdmetrics::{BdSummary, InterpolationMethod};
use crate::profiles::{CodingConfig, ToolProfile};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub id: String,
    pub bits: String,
    pub tools: BTreeMap<String, bool>,
    pub bd: Option<BdSummary>,
}

impl ProfileSummary {
    pub fn from_evaluation(e: &Evaluation) -> Self {
        ProfileSummary {
            id: e.id(),
            bits: e.bits.clone(),
            tools: e.profile.usage().clone(),
            bd: e.bd,
        }
    }

    pub fn from_profile(p: &ToolProfile, bits: String, bd: Option<BdSummary>) -> Self {
        ProfileSummary {
            id: p.id(),
            bits,
            tools: p.usage().clone(),
            bd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseReport {
    pub schema_version: u32,
    pub config: CodingConfig,
    pub objective: Objective,
    pub method: InterpolationMethod,
    pub accept_mode: AcceptMode,
    pub seed: u64,
    pub catalog_fingerprint: String,
    pub evaluator: String,
    pub sequences: Vec<String>,
    pub refine_sequences: Vec<String>,
    pub qps: Vec<i32>,
    pub tools: Vec<String>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_profile: ProfileSummary,
    pub ee_profile: ProfileSummary,
    /// Absent when no evaluated profile met the BDR cap.
    pub ebe_profile: Option<ProfileSummary>,
    pub ebe_note: Option<String>,
    pub sensitivity: BTreeMap<String, SensitivityEntry>,
    pub pareto: Vec<ProfileSummary>,
    pub evaluator_call_count: u64,
    pub refine_call_count: u64,
}
