//! Deterministic synthetic cost landscapes.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_request, EvalError, Evaluator, Purity, DEFAULT_QPS};
use crate::bdmetrics::{RdCurve, RdPoint};
use crate::profiles::{CodingConfig, ProfileError, ToolCatalog, ToolProfile};

/// Log10-domain effect of moving one tool away from its CTC default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolEffect {
    #[serde(default)]
    pub d_log_rate: f64,
    #[serde(default)]
    pub d_log_energy: f64,
    /// Additive shift of every quality metric, in dB for PSNR and points for VMAF.
    #[serde(default)]
    pub d_quality: f64,
}

impl ToolEffect {
    fn add(&mut self, other: &ToolEffect) {
        self.d_log_rate += other.d_log_rate;
        self.d_log_energy += other.d_log_energy;
        self.d_quality += other.d_quality;
    }

    fn is_finite(&self) -> bool {
        self.d_log_rate.is_finite() && self.d_log_energy.is_finite() && self.d_quality.is_finite()
    }
}

/// Extra effect applied when both tools are away from their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub tools: [String; 2],
    #[serde(flatten)]
    pub effect: ToolEffect,
}

/// The JSON form of a landscape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub config: CodingConfig,
    pub base: Vec<RdPoint>,
    #[serde(default)]
    pub tools: BTreeMap<String, ToolEffect>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    /// Standard deviation of log10 energy noise; zero disables noise.
    #[serde(default)]
    pub noise_stddev: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Anchor curve that is exactly linear in log-cost over PSNR, which keeps
/// separable landscapes additive in BD space.
fn log_linear_base() -> Vec<RdPoint> {
    DEFAULT_QPS
        .iter()
        .map(|&qp| {
            let psnr = 41.0 - 0.4 * (qp - 22) as f64;
            let x = psnr - 35.0;
            RdPoint {
                qp,
                rate_kbps: 1000.0 * 10f64.powf(0.18 * x),
                psnr_y: psnr,
                psnr_u: psnr,
                psnr_v: psnr,
                vmaf: Some(70.0 + 4.0 * x),
                energy_j: Some(50.0 * 10f64.powf(0.03 * x)),
                time_s: None,
            }
        })
        .collect()
}

fn random_effect(rng: &mut ChaCha8Rng) -> ToolEffect {
    ToolEffect {
        d_log_rate: rng.random_range(-0.01..0.03),
        d_log_energy: rng.random_range(-0.06..0.04),
        d_quality: rng.random_range(-0.15..0.15),
    }
}

impl LandscapeSpec {
    /// Every listed tool gets zero effect.
    pub fn flat(config: CodingConfig, tools: &[&str]) -> Self {
        LandscapeSpec {
            config,
            base: log_linear_base(),
            tools: tools.iter().map(|t| (t.to_string(), ToolEffect::default())).collect(),
            interactions: Vec::new(),
            noise_stddev: 0.0,
            seed: 0,
        }
    }

    /// Random per-tool effects over a log-linear base, no interactions.
    pub fn random_separable(config: CodingConfig, tools: &[&str], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = Self::flat(config, tools);
        spec.seed = seed;
        for t in tools {
            spec.tools.insert(t.to_string(), random_effect(&mut rng));
        }
        spec
    }

    /// Like [`random_separable`](Self::random_separable) plus `pairs`
    /// interactions that punish flipping both tools together.
    pub fn random_interacting(config: CodingConfig, tools: &[&str], pairs: usize, seed: u64) -> Self {
        let mut spec = Self::random_separable(config, tools, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut used = BTreeSet::new();
        let max_pairs = tools.len() * tools.len().saturating_sub(1) / 2;
        while spec.interactions.len() < pairs.min(max_pairs) {
            let a = rng.random_range(0..tools.len());
            let b = rng.random_range(0..tools.len());
            if a == b || !used.insert((a.min(b), a.max(b))) {
                continue;
            }
            spec.interactions.push(Interaction {
                tools: [tools[a].to_string(), tools[b].to_string()],
                effect: ToolEffect {
                    d_log_rate: rng.random_range(0.0..0.01),
                    d_log_energy: rng.random_range(0.02..0.12),
                    d_quality: rng.random_range(-0.1..0.0),
                },
            });
        }
        spec
    }

    pub fn from_json(json: &str) -> Result<Self, EvalError> {
        serde_json::from_str(json).map_err(|e| EvalError::Config(format!("landscape: {e}")))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("landscape serializes")
    }
}

/// Evaluator backed by a [`LandscapeSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticLandscape {
    spec: LandscapeSpec,
    ctc: ToolProfile,
    catalog: ToolCatalog,
    base: BTreeMap<i32, RdPoint>,
}

impl SyntheticLandscape {
    pub fn new(spec: LandscapeSpec, catalog: &ToolCatalog) -> Result<Self, EvalError> {
        let config = spec.config;
        let check_tool = |name: &str| -> Result<(), EvalError> {
            match catalog.get(name) {
                None => Err(ProfileError::UnknownTool(name.to_string()).into()),
                Some(t) if !t.applies_to(config) => Err(ProfileError::Inapplicable {
                    tool: name.to_string(),
                    config,
                }
                .into()),
                Some(_) => Ok(()),
            }
        };
        for (name, effect) in &spec.tools {
            check_tool(name)?;
            if !effect.is_finite() {
                return Err(EvalError::Config(format!("non-finite effect for tool `{name}`")));
            }
        }
        for inter in &spec.interactions {
            let [a, b] = &inter.tools;
            check_tool(a)?;
            check_tool(b)?;
            if a == b {
                return Err(EvalError::Config(format!("interaction pairs `{a}` with itself")));
            }
            if !inter.effect.is_finite() {
                return Err(EvalError::Config(format!("non-finite interaction effect for ({a}, {b})")));
            }
        }
        if !(spec.noise_stddev.is_finite() && spec.noise_stddev >= 0.0) {
            return Err(EvalError::Config("noise_stddev must be finite and non-negative".into()));
        }
        let base_curve = RdCurve::new("base", "base", spec.base.clone()).map_err(|source| EvalError::Curve {
            profile_id: "base".into(),
            sequence: "base".into(),
            source,
        })?;
        let energy: Option<Vec<_>> = base_curve.points.iter().map(|p| p.energy_j).collect();
        let Some(energy) = energy else {
            return Err(EvalError::Config("every base point needs energy_j".into()));
        };
        // Sorted by ascending QP, so quality falls and energy must fall with it.
        if energy.windows(2).any(|w| w[1] >= w[0]) {
            return Err(EvalError::Config("base energy must decrease strictly with QP".into()));
        }
        let base = base_curve.points.iter().map(|p| (p.qp, p.clone())).collect();
        Ok(SyntheticLandscape {
            ctc: catalog.ctc_profile(config),
            catalog: catalog.clone(),
            spec,
            base,
        })
    }

    pub fn from_json(json: &str, catalog: &ToolCatalog) -> Result<Self, EvalError> {
        Self::new(LandscapeSpec::from_json(json)?, catalog)
    }

    pub fn spec(&self) -> &LandscapeSpec {
        &self.spec
    }

    pub fn config(&self) -> CodingConfig {
        self.spec.config
    }

    /// Summed effect of every tool that differs from CTC, plus interactions.
    pub fn total_effect(&self, profile: &ToolProfile) -> ToolEffect {
        let flipped: BTreeSet<&str> = profile
            .usage()
            .iter()
            .filter(|(name, on)| self.ctc.get(name) != Some(**on))
            .map(|(name, _)| name.as_str())
            .collect();
        let mut total = ToolEffect::default();
        for name in &flipped {
            if let Some(e) = self.spec.tools.get(*name) {
                total.add(e);
            }
        }
        for inter in &self.spec.interactions {
            if flipped.contains(inter.tools[0].as_str()) && flipped.contains(inter.tools[1].as_str()) {
                total.add(&inter.effect);
            }
        }
        total
    }

    fn noise(&self, profile_hash: &str, sequence: &str, qp: i32) -> f64 {
        if self.spec.noise_stddev == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(self.spec.seed.to_le_bytes());
        h.update(profile_hash.as_bytes());
        h.update(b"\0");
        h.update(sequence.as_bytes());
        h.update(qp.to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        Normal::new(0.0, self.spec.noise_stddev)
            .expect("validated stddev")
            .sample(&mut rng)
    }
}

impl Evaluator for SyntheticLandscape {
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError> {
        check_request(sequences, qps)?;
        if profile.config() != self.spec.config {
            return Err(ProfileError::ConfigMismatch {
                expected: self.spec.config,
                found: profile.config(),
            }
            .into());
        }
        self.catalog.validate(profile)?;
        let effect = self.total_effect(profile);
        let rate_scale = 10f64.powf(effect.d_log_rate);
        let energy_scale = 10f64.powf(effect.d_log_energy);
        let hash = profile.canonical_hash();
        let id = profile.id();
        sequences
            .iter()
            .map(|seq| {
                let points = qps
                    .iter()
                    .map(|qp| {
                        let b = self.base.get(qp).ok_or_else(|| {
                            EvalError::InvalidRequest(format!("landscape has no anchor point for QP {qp}"))
                        })?;
                        let e_scale = energy_scale * 10f64.powf(self.noise(&hash, seq, *qp));
                        Ok(RdPoint {
                            qp: *qp,
                            rate_kbps: b.rate_kbps * rate_scale,
                            psnr_y: b.psnr_y + effect.d_quality,
                            psnr_u: b.psnr_u + effect.d_quality,
                            psnr_v: b.psnr_v + effect.d_quality,
                            vmaf: b.vmaf.map(|v| v + effect.d_quality),
                            energy_j: b.energy_j.map(|e| e * e_scale),
                            time_s: b.time_s.map(|t| t * energy_scale),
                        })
                    })
                    .collect::<Result<Vec<_>, EvalError>>()?;
                RdCurve::new(id.clone(), seq.clone(), points).map_err(|source| EvalError::Curve {
                    profile_id: id.clone(),
                    sequence: seq.clone(),
                    source,
                })
            })
            .collect()
    }

    fn purity(&self) -> Purity {
        Purity::PureParallel
    }

    fn describe(&self) -> String {
        format!(
            "synthetic landscape ({}, {} tool effects, {} interactions, seed {})",
            self.spec.config,
            self.spec.tools.len(),
            self.spec.interactions.len(),
            self.spec.seed
        )
    }
}
