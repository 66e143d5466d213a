//! Exhaustive search over a small tool subset.

use serde::{Deserialize, Serialize};

use super::greedy::explored_tools;
use super::{DseError, Evaluation, Explorer, Objective};
use crate::profiles::ToolProfile;

/// Largest subset accepted, i.e. at most 2^20 profiles.
pub const MAX_SUBSET: usize = 20;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullSearch {
    /// Enumerated tools in catalog order.
    pub tools: Vec<String>,
    /// Requested tools that do not apply to the configuration.
    pub dropped: Vec<String>,
    /// All 2^n results, best objective first; unscored profiles last.
    pub results: Vec<Evaluation>,
}

impl FullSearch {
    pub fn best(&self) -> Option<&Evaluation> {
        self.results.first()
    }
}

/// Evaluates every on/off combination of `subset`; tools outside it keep
/// their CTC defaults. Tools that do not apply to the configuration are
/// dropped from the subset.
pub fn full_search(ex: &Explorer, subset: &[String], objective: Objective) -> Result<FullSearch, DseError> {
    let tools = explored_tools(ex, Some(subset))?;
    let dropped: Vec<String> = subset.iter().filter(|t| !tools.contains(t)).cloned().collect();
    if tools.len() > MAX_SUBSET {
        return Err(DseError::SubsetTooLarge {
            size: tools.len(),
            max: MAX_SUBSET,
        });
    }
    let base = ex.baseline().clone();
    let profiles: Vec<ToolProfile> = (0u32..1 << tools.len())
        .map(|mask| {
            tools.iter().enumerate().try_fold(base.clone(), |p, (k, t)| {
                p.with(t, mask & (1 << k) != 0)
            })
        })
        .collect::<Result<_, _>>()?;
    let mut results = ex.evaluate_many(&profiles)?;
    let hashes: Vec<String> = results.iter().map(|e| e.profile.canonical_hash()).collect();
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| results[i].objective(objective).unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| hashes[a].cmp(&hashes[b]))
    });
    let mut slots: Vec<Option<Evaluation>> = results.drain(..).map(Some).collect();
    let results = order.into_iter().map(|i| slots[i].take().expect("each index once")).collect();
    Ok(FullSearch { tools, dropped, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdmetrics::InterpolationMethod;
    use crate::evaluator::{LandscapeSpec, SyntheticLandscape, DEFAULT_QPS};
    use crate::profiles::{CodingConfig, ToolCatalog};

    const SUBSET: [&str; 8] = ["ISP", "CCLM", "DQ", "MTS", "ALF", "SAO", "AFFINE", "GPM"];

    fn search(config: CodingConfig, subset: &[&str]) -> (FullSearch, u64) {
        let cat = ToolCatalog::builtin();
        let effective: Vec<&str> = subset
            .iter()
            .copied()
            .filter(|t| cat.get(t).unwrap().applies_to(config))
            .collect();
        let land = SyntheticLandscape::new(LandscapeSpec::random_separable(config, &effective, 5), cat).unwrap();
        let ex = Explorer::new(&land, cat, config, vec!["s".into()], DEFAULT_QPS.to_vec(), InterpolationMethod::Pchip)
            .unwrap();
        let names: Vec<String> = subset.iter().map(|s| s.to_string()).collect();
        let fs = full_search(&ex, &names, Objective::BddePsnr).unwrap();
        (fs, ex.calls())
    }

    #[test]
    fn ra_subset_has_256_results() {
        let (fs, calls) = search(CodingConfig::RA, &SUBSET);
        assert_eq!(fs.results.len(), 256);
        assert_eq!(calls, 256);
        assert!(fs.dropped.is_empty());
        let ctc = ToolCatalog::builtin().ctc_profile(CodingConfig::RA);
        assert!(fs.results.iter().any(|e| e.profile == ctc));
        let objs: Vec<f64> = fs.results.iter().map(|e| e.objective(Objective::BddePsnr).unwrap()).collect();
        assert!(objs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ai_subset_drops_inter_tools() {
        let (fs, _) = search(CodingConfig::AI, &SUBSET);
        assert_eq!(fs.results.len(), 64);
        assert_eq!(fs.dropped, vec!["AFFINE".to_string(), "GPM".to_string()]);
    }

    #[test]
    fn one_tool_two_results() {
        let (fs, _) = search(CodingConfig::RA, &["GPM"]);
        assert_eq!(fs.results.len(), 2);
    }

    #[test]
    fn oversized_subset_rejected() {
        let cat = ToolCatalog::builtin();
        let land = SyntheticLandscape::new(LandscapeSpec::flat(CodingConfig::RA, &[]), cat).unwrap();
        let ex = Explorer::new(
            &land,
            cat,
            CodingConfig::RA,
            vec!["s".into()],
            DEFAULT_QPS.to_vec(),
            InterpolationMethod::Pchip,
        )
        .unwrap();
        let all = cat.applicable_names(CodingConfig::RA);
        assert!(matches!(
            full_search(&ex, &all, Objective::BddePsnr),
            Err(DseError::SubsetTooLarge { size: 28, max: 20 })
        ));
        assert!(matches!(
            full_search(&ex, &["NOPE".to_string()], Objective::BddePsnr),
            Err(DseError::Profile(_))
        ));
    }
}
