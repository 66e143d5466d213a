//! Pareto extraction, sensitivity categories and EE/EBE selection.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DseError, Evaluation, Explorer, Objective, TraceRecord, REFERENCE};
use crate::profiles::{CodingConfig, ToolCatalog};

/// Indices of the points not dominated under (minimize x, minimize y).
///
/// A point is dominated when another is no worse in both coordinates and
/// strictly better in one. Exact duplicates of a front point are kept. The
/// result is sorted by (x, y, index).
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for i in order {
        let p = points[i];
        let keep = match last {
            None => true,
            Some(l) => p.1 < l.1 || p == l,
        };
        if keep {
            front.push(i);
            last = Some(p);
        }
    }
    front
}

/// Non-dominated evaluations under (BDR, objective), sorted by BDR.
/// Unscored evaluations are ignored.
pub fn pareto_front(evals: &[Evaluation], objective: Objective) -> Vec<Evaluation> {
    let scored: Vec<(&Evaluation, (f64, f64))> = evals
        .iter()
        .filter_map(|e| Some((e, (e.bdr(objective)?, e.objective(objective)?))))
        .collect();
    let points: Vec<(f64, f64)> = scored.iter().map(|(_, p)| *p).collect();
    let mut front: Vec<Evaluation> = pareto_indices(&points)
        .into_iter()
        .map(|i| scored[i].0.clone())
        .collect();
    // Ties are ordered by hash so the output does not depend on input order.
    front.sort_by(|a, b| {
        let ka = (a.bdr(objective).unwrap(), a.objective(objective).unwrap());
        let kb = (b.bdr(objective).unwrap(), b.objective(objective).unwrap());
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then_with(|| a.profile.canonical_hash().cmp(&b.profile.canonical_hash()))
    });
    front
}

/// Influence of using a tool on energy efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SensitivityCategory {
    MajorIncrease,
    MinorIncrease,
    MinorDecrease,
    MajorDecrease,
}

impl SensitivityCategory {
    /// Threshold in percent separating minor from major influence.
    pub const THRESHOLD: f64 = 1.0;

    /// `effect` is the energy change caused by not using the tool, in percent.
    pub fn classify(effect: f64) -> Self {
        let major = effect.abs() > Self::THRESHOLD;
        match (effect > 0.0, major) {
            (true, true) => SensitivityCategory::MajorIncrease,
            (true, false) => SensitivityCategory::MinorIncrease,
            (false, false) => SensitivityCategory::MinorDecrease,
            (false, true) => SensitivityCategory::MajorDecrease,
        }
    }
}

impl fmt::Display for SensitivityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensitivityCategory::MajorIncrease => "MajorIncrease",
            SensitivityCategory::MinorIncrease => "MinorIncrease",
            SensitivityCategory::MinorDecrease => "MinorDecrease",
            SensitivityCategory::MajorDecrease => "MajorDecrease",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub ctc_enabled: bool,
    /// Objective of the single toggle against the baseline.
    pub toggle_bdde: f64,
    /// Energy change attributable to not using the tool.
    pub effect: f64,
    pub category: SensitivityCategory,
}

/// Categorizes every tool toggled in iteration 1 of `trace`.
///
/// For a tool enabled under CTC the toggle disables it, so a positive BDDE
/// means the tool saves energy. For a tool disabled under CTC the toggle
/// enables it and the reading is negated.
pub fn sensitivity(
    trace: &[TraceRecord],
    catalog: &ToolCatalog,
    config: CodingConfig,
) -> Result<BTreeMap<String, SensitivityEntry>, DseError> {
    let ctc = catalog.ctc_profile(config);
    let mut out = BTreeMap::new();
    for rec in trace.iter().filter(|r| r.iteration == 1 && r.tool != REFERENCE) {
        let ctc_enabled = ctc.get(&rec.tool).ok_or_else(|| DseError::MissingRecord(rec.tool.clone()))?;
        let bdde = rec.objective.ok_or_else(|| DseError::NoValue(rec.tool.clone()))?;
        let effect = if ctc_enabled { bdde } else { -bdde };
        out.insert(
            rec.tool.clone(),
            SensitivityEntry {
                ctc_enabled,
                toggle_bdde: bdde,
                effect,
                category: SensitivityCategory::classify(effect),
            },
        );
    }
    if out.is_empty() {
        return Err(DseError::MissingRecord("any tool".into()));
    }
    Ok(out)
}

/// The evaluation with the lowest objective; ties go to the lower BDR, then
/// to the lower profile hash.
pub fn select_ee(evals: &[Evaluation], objective: Objective) -> Result<&Evaluation, DseError> {
    evals
        .iter()
        .filter_map(|e| Some((e, e.objective(objective)?, e.bdr(objective).unwrap_or(f64::INFINITY))))
        .min_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(a.2.total_cmp(&b.2))
                .then_with(|| a.0.profile.canonical_hash().cmp(&b.0.profile.canonical_hash()))
        })
        .map(|(e, _, _)| e)
        .ok_or(DseError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbeOptions {
    /// Candidates need a BDR strictly below this, in percent.
    pub bdr_cap: f64,
    /// Shortlist size.
    pub k: usize,
}

impl Default for EbeOptions {
    fn default() -> Self {
        EbeOptions { bdr_cap: 10.0, k: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EbeSelection {
    /// Shortlisted evaluations before refinement, best sum first.
    pub shortlist: Vec<Evaluation>,
    /// The same profiles re-evaluated by the refinement explorer.
    pub refined: Vec<Evaluation>,
    pub winner: Evaluation,
}

fn sum(e: &Evaluation, objective: Objective) -> Option<f64> {
    Some(e.objective(objective)? + e.bdr(objective)?)
}

fn by_sum<'e>(evals: impl IntoIterator<Item = &'e Evaluation>, objective: Objective) -> Vec<&'e Evaluation> {
    let mut v: Vec<(&Evaluation, f64)> = evals.into_iter().filter_map(|e| Some((e, sum(e, objective)?))).collect();
    v.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0.profile.canonical_hash().cmp(&b.0.profile.canonical_hash()))
    });
    v.into_iter().map(|(e, _)| e).collect()
}

/// Shortlists the `k` lowest BDDE+BDR sums among candidates under the BDR
/// cap, re-evaluates them with `refine`, and returns the refined argmin.
pub fn select_ebe(
    evals: &[Evaluation],
    objective: Objective,
    refine: &Explorer,
    opts: EbeOptions,
) -> Result<EbeSelection, DseError> {
    let under_cap = evals.iter().filter(|e| e.bdr(objective).is_some_and(|b| b < opts.bdr_cap));
    let shortlist: Vec<Evaluation> = by_sum(under_cap, objective)
        .into_iter()
        .take(opts.k)
        .cloned()
        .collect();
    if shortlist.is_empty() {
        return Err(DseError::EmptyShortlist { cap: opts.bdr_cap });
    }
    let profiles: Vec<_> = shortlist.iter().map(|e| e.profile.clone()).collect();
    let refined = refine.evaluate_many(&profiles)?;
    let winner = by_sum(&refined, objective)
        .first()
        .map(|e| (*e).clone())
        .ok_or(DseError::EmptyShortlist { cap: opts.bdr_cap })?;
    Ok(EbeSelection {
        shortlist,
        refined,
        winner,
    })
}
