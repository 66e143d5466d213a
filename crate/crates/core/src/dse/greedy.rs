//! Greedy single-bit-toggle search.

use serde::{Deserialize, Serialize};

use super::{DseError, Evaluation, Explorer, Objective, TraceRecord, REFERENCE};
use crate::profiles::ToolProfile;

/// How improving toggles of one iteration enter the next reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptMode {
    /// Every toggle that beats the iteration reference is folded in at once.
    #[default]
    Batch,
    /// Toggles are applied one at a time and each is compared against the
    /// running best.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseOptions {
    pub objective: Objective,
    pub accept: AcceptMode,
    /// Tools to toggle, in any order; `None` explores every applicable tool.
    /// Tools outside the set stay at their CTC defaults.
    pub tools: Option<Vec<String>>,
    pub max_iterations: usize,
}

impl Default for DseOptions {
    fn default() -> Self {
        DseOptions {
            objective: Objective::BddePsnr,
            accept: AcceptMode::Batch,
            tools: None,
            max_iterations: 64,
        }
    }
}

/// Why the search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The next reference equals the current one.
    Converged,
    /// No candidate beat the previous iteration's reference.
    NoImprovement,
    /// The reference itself could not be scored.
    ReferenceUnscored,
    IterationCap,
}

/// Search state carried between iterations.
#[derive(Debug, Clone)]
pub struct DseState {
    /// Iteration index, from 1.
    pub i: usize,
    pub reference: ToolProfile,
    pub baseline: ToolProfile,
    /// Objective of the previous iteration's reference.
    pub best_prev: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DseOutcome {
    /// Best reference profile seen, which is the last one whenever the
    /// references improved monotonically.
    pub final_profile: ToolProfile,
    pub final_objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRecord>,
    pub evaluator_calls: u64,
    /// Evaluator calls at the end of each iteration.
    pub calls_per_iteration: Vec<u64>,
}

/// Resolves the explored tools to catalog order, dropping inapplicable ones.
pub(super) fn explored_tools(ex: &Explorer, tools: Option<&[String]>) -> Result<Vec<String>, DseError> {
    let applicable = ex.catalog().applicable_names(ex.config());
    let out = match tools {
        None => applicable,
        Some(list) => {
            for t in list {
                if ex.catalog().get(t).is_none() {
                    return Err(crate::profiles::ProfileError::UnknownTool(t.clone()).into());
                }
            }
            applicable.into_iter().filter(|t| list.contains(t)).collect()
        }
    };
    if out.is_empty() {
        return Err(DseError::NoTools);
    }
    Ok(out)
}

fn record(
    ex: &Explorer,
    iteration: usize,
    tool: &str,
    eval: &Evaluation,
    objective: Objective,
    accepted: bool,
) -> TraceRecord {
    TraceRecord {
        iteration,
        tool: tool.to_string(),
        config: ex.config(),
        profile_id: eval.id(),
        bits: eval.bits.clone(),
        bd: eval.bd,
        objective: eval.objective(objective),
        accepted,
        error: eval.error.clone(),
        evaluator_calls_so_far: ex.calls(),
    }
}

/// Greedy search from the CTC profile.
///
/// Each iteration scores the reference, then every single-bit toggle of it.
/// A toggle is accepted only if its objective is strictly below the
/// reference's. The search stops when no toggle is accepted, or, from the
/// second iteration on, when no toggle beats the previous reference.
pub fn greedy_dse(ex: &Explorer, opts: &DseOptions) -> Result<DseOutcome, DseError> {
    let tools = explored_tools(ex, opts.tools.as_deref())?;
    let objective = opts.objective;
    let mut trace = Vec::new();
    let mut calls_per_iteration = Vec::new();
    let mut state = DseState {
        i: 1,
        reference: ex.baseline().clone(),
        baseline: ex.baseline().clone(),
        best_prev: None,
    };
    let abort = |source, trace: &Vec<TraceRecord>| DseError::Aborted {
        source,
        trace: trace.clone(),
    };
    let mut best: Option<(ToolProfile, f64)> = None;

    let termination = loop {
        if state.i > opts.max_iterations {
            state.i -= 1;
            break Termination::IterationCap;
        }
        let ref_eval = ex.evaluate(&state.reference).map_err(|e| abort(e, &trace))?;
        trace.push(record(ex, state.i, REFERENCE, &ref_eval, objective, true));
        let Some(ref_obj) = ref_eval.objective(objective) else {
            calls_per_iteration.push(ex.calls());
            break Termination::ReferenceUnscored;
        };
        if best.as_ref().is_none_or(|(_, b)| ref_obj < *b) {
            best = Some((state.reference.clone(), ref_obj));
        }

        let mut next = state.reference.clone();
        let mut candidate_objs = Vec::with_capacity(tools.len());
        match opts.accept {
            AcceptMode::Batch => {
                let candidates: Vec<ToolProfile> = tools
                    .iter()
                    .map(|t| state.reference.toggle(t))
                    .collect::<Result<_, _>>()?;
                let evals = match ex.evaluate_many(&candidates) {
                    Ok(e) => e,
                    Err(e) => return Err(abort(e, &trace)),
                };
                for (tool, eval) in tools.iter().zip(&evals) {
                    let obj = eval.objective(objective);
                    let accepted = obj.is_some_and(|o| o < ref_obj);
                    if accepted {
                        next = next.with(tool, eval.profile.get(tool).expect("tool present"))?;
                    }
                    candidate_objs.push(obj);
                    trace.push(record(ex, state.i, tool, eval, objective, accepted));
                }
            }
            AcceptMode::Sequential => {
                let mut cur_obj = ref_obj;
                for tool in &tools {
                    let cand = next.toggle(tool)?;
                    let eval = ex.evaluate(&cand).map_err(|e| abort(e, &trace))?;
                    let obj = eval.objective(objective);
                    let accepted = obj.is_some_and(|o| o < cur_obj);
                    if let (true, Some(o)) = (accepted, obj) {
                        next = cand;
                        cur_obj = o;
                    }
                    candidate_objs.push(obj);
                    trace.push(record(ex, state.i, tool, &eval, objective, accepted));
                }
            }
        }
        calls_per_iteration.push(ex.calls());

        if next == state.reference {
            break Termination::Converged;
        }
        if let Some(prev) = state.best_prev {
            if candidate_objs.iter().all(|o| o.is_none_or(|o| o >= prev)) {
                break Termination::NoImprovement;
            }
        }
        state.best_prev = Some(ref_obj);
        state.reference = next;
        state.i += 1;
    };

    let (final_profile, final_objective) = best.unwrap_or_else(|| (state.baseline.clone(), 0.0));
    Ok(DseOutcome {
        final_profile,
        final_objective,
        iterations: state.i,
        termination,
        trace,
        evaluator_calls: ex.calls(),
        calls_per_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdmetrics::InterpolationMethod;
    use crate::evaluator::{LandscapeSpec, SyntheticLandscape, ToolEffect, DEFAULT_QPS};
    use crate::profiles::{CodingConfig, ToolCatalog};

    const SUBSET: [&str; 8] = ["ISP", "CCLM", "DQ", "MTS", "ALF", "SAO", "AFFINE", "GPM"];

    fn run(spec: LandscapeSpec, opts: &DseOptions) -> DseOutcome {
        let cat = ToolCatalog::builtin();
        let land = SyntheticLandscape::new(spec, cat).unwrap();
        let ex = Explorer::new(
            &land,
            cat,
            CodingConfig::RA,
            vec!["s".into()],
            DEFAULT_QPS.to_vec(),
            InterpolationMethod::Pchip,
        )
        .unwrap();
        greedy_dse(&ex, opts).unwrap()
    }

    fn subset_opts() -> DseOptions {
        DseOptions {
            tools: Some(SUBSET.iter().map(|s| s.to_string()).collect()),
            ..Default::default()
        }
    }

    #[test]
    fn zero_deltas_converge_immediately() {
        let out = run(LandscapeSpec::flat(CodingConfig::RA, &SUBSET), &subset_opts());
        assert_eq!(out.iterations, 1);
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.final_profile, ToolCatalog::builtin().ctc_profile(CodingConfig::RA));
        assert_eq!(out.trace.len(), 9);
        assert!(out.trace.iter().skip(1).all(|r| !r.accepted));
    }

    #[test]
    fn single_improving_tool_takes_two_iterations() {
        let mut spec = LandscapeSpec::flat(CodingConfig::RA, &SUBSET);
        for (i, t) in SUBSET.iter().enumerate() {
            spec.tools.get_mut(*t).unwrap().d_log_energy = 0.01 * (i + 1) as f64;
        }
        spec.tools.insert(
            "MTS".into(),
            ToolEffect {
                d_log_energy: -0.04,
                ..Default::default()
            },
        );
        let out = run(spec, &subset_opts());
        assert_eq!(out.iterations, 2);
        assert_eq!(out.termination, Termination::Converged);
        let expected = ToolCatalog::builtin().ctc_profile(CodingConfig::RA).toggle("MTS").unwrap();
        assert_eq!(out.final_profile, expected);
        // One reference plus eight candidates per iteration.
        assert_eq!(out.trace.len(), 18);
        assert_eq!(out.trace.iter().filter(|r| r.accepted && r.tool != REFERENCE).count(), 1);
        // Toggling MTS back in iteration 2 returns to the memoized baseline.
        assert_eq!(out.evaluator_calls, 1 + 8 + 7);
    }

    #[test]
    fn strict_less_rule() {
        let mut spec = LandscapeSpec::flat(CodingConfig::RA, &SUBSET);
        spec.tools.get_mut("ALF").unwrap().d_log_energy = 0.0;
        let out = run(spec, &subset_opts());
        assert!(out.trace.iter().filter(|r| r.tool != REFERENCE).all(|r| !r.accepted));
    }

    #[test]
    fn trace_calls_are_monotone() {
        let out = run(LandscapeSpec::random_interacting(CodingConfig::RA, &SUBSET, 6, 4), &subset_opts());
        assert!(out
            .trace
            .windows(2)
            .all(|w| w[0].evaluator_calls_so_far <= w[1].evaluator_calls_so_far));
        for (i, calls) in out.calls_per_iteration.iter().enumerate() {
            assert!(*calls <= ((i + 1) * (SUBSET.len() + 1)) as u64);
        }
    }

    #[test]
    fn sequential_mode_never_worse_than_baseline() {
        for seed in 0..10 {
            let mut opts = subset_opts();
            opts.accept = AcceptMode::Sequential;
            let out = run(LandscapeSpec::random_interacting(CodingConfig::RA, &SUBSET, 8, seed), &opts);
            assert!(out.final_objective <= 0.0);
        }
    }

    #[test]
    fn deterministic_trace() {
        let spec = LandscapeSpec::random_separable(CodingConfig::RA, &SUBSET, 77);
        let a = run(spec.clone(), &subset_opts());
        let b = run(spec, &subset_opts());
        assert_eq!(a.trace, b.trace);
    }
}
