//! Option resolution (flags and environment, then run config file, then
//! defaults) and evaluator construction.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tooldse_core::dse::Objective;
use tooldse_core::evaluator::{Evaluator, LandscapeSpec, PipelineConfig, PipelineEvaluator, SyntheticLandscape, DEFAULT_QPS};
use tooldse_core::profiles::{CodingConfig, ToolCatalog};
use tooldse_core::InterpolationMethod;

use crate::failure::Failure;
use crate::SearchArgs;

/// Keys accepted in a `--run-config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub config: Option<CodingConfig>,
    pub evaluator: Option<String>,
    pub objective: Option<Objective>,
    pub method: Option<InterpolationMethod>,
    pub sequences: Option<Vec<String>>,
    pub qps: Option<Vec<i32>>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub catalog: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub tools: Option<Vec<String>>,
    pub refine_evaluator: Option<String>,
    pub refine_sequences: Option<Vec<String>>,
    pub sequential_accept: Option<bool>,
    pub max_iterations: Option<usize>,
    pub bdr_cap: Option<f64>,
    pub ebe_k: Option<usize>,
    pub svg: Option<bool>,
}

impl RunFile {
    /// Loads the file; relative paths inside it are taken relative to it.
    pub fn load(path: Option<&Path>) -> Result<RunFile, Failure> {
        let Some(path) = path else {
            return Ok(RunFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let mut f: RunFile = toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        };
        rebase(&mut f.catalog);
        rebase(&mut f.cache);
        rebase(&mut f.out);
        for spec in [&mut f.evaluator, &mut f.refine_evaluator].into_iter().flatten() {
            if let Some((kind, p)) = spec.split_once(':') {
                if Path::new(p).is_relative() {
                    *spec = format!("{kind}:{}", dir.join(p).display());
                }
            }
        }
        Ok(f)
    }
}

/// Fully resolved search options, written to `run_config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    pub config: CodingConfig,
    pub evaluator: String,
    pub objective: Objective,
    pub method: InterpolationMethod,
    pub sequences: Vec<String>,
    pub qps: Vec<i32>,
    pub jobs: usize,
    pub seed: u64,
    pub catalog: Option<PathBuf>,
    pub catalog_name: String,
    pub catalog_fingerprint: String,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
    pub tools: Option<Vec<String>>,
    pub refine_evaluator: Option<String>,
    pub refine_sequences: Option<Vec<String>>,
    pub sequential_accept: Option<bool>,
    pub max_iterations: Option<usize>,
    pub bdr_cap: Option<f64>,
    pub ebe_k: Option<usize>,
    pub svg: Option<bool>,
}

pub enum Source {
    Synthetic(LandscapeSpec),
    Pipeline(PipelineConfig),
}

impl Source {
    pub fn parse(spec: &str) -> Result<Source, Failure> {
        let (kind, path) = spec
            .split_once(':')
            .ok_or_else(|| Failure::usage(format!("evaluator `{spec}` must be synthetic:<file> or pipeline:<file>")))?;
        match kind {
            "synthetic" => {
                let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{path}: {e}")))?;
                Ok(Source::Synthetic(
                    LandscapeSpec::from_json(&text).map_err(|e| Failure::usage(format!("{path}: {e}")))?,
                ))
            }
            "pipeline" => Ok(Source::Pipeline(PipelineConfig::load(Path::new(path))?)),
            _ => Err(Failure::usage(format!("unknown evaluator kind `{kind}` (expected synthetic or pipeline)"))),
        }
    }

    fn config(&self) -> Option<CodingConfig> {
        match self {
            Source::Synthetic(s) => Some(s.config),
            Source::Pipeline(_) => None,
        }
    }

    fn default_sequences(&self) -> Vec<String> {
        match self {
            Source::Synthetic(_) => vec!["synthetic".to_string()],
            Source::Pipeline(cfg) => cfg.sequences.keys().cloned().collect(),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            Source::Synthetic(s) => s.seed,
            Source::Pipeline(_) => 0,
        }
    }

    /// Instantiates the evaluator; `seed` replaces a synthetic landscape's seed.
    pub fn build(self, catalog: &ToolCatalog, config: CodingConfig, seed: u64) -> Result<Box<dyn Evaluator>, Failure> {
        match self {
            Source::Synthetic(mut spec) => {
                if spec.config != config {
                    return Err(Failure::usage(format!(
                        "landscape is defined for {} but the run uses {config}",
                        spec.config
                    )));
                }
                spec.seed = seed;
                Ok(Box::new(SyntheticLandscape::new(spec, catalog)?))
            }
            Source::Pipeline(cfg) => Ok(Box::new(PipelineEvaluator::new(cfg, catalog)?)),
        }
    }
}

pub fn load_catalog(path: Option<&Path>) -> Result<ToolCatalog, Failure> {
    match path {
        None => Ok(ToolCatalog::builtin().clone()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            ToolCatalog::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
        }
    }
}

pub struct Resolved {
    pub run: RunConfig,
    pub file: RunFile,
    pub catalog: ToolCatalog,
    pub source: Source,
}

/// Merges flags (already merged with the environment by clap) over the run
/// config file and defaults.
pub fn resolve(command: &str, args: &SearchArgs) -> Result<Resolved, Failure> {
    let file = RunFile::load(args.run_config.as_deref())?;
    let evaluator = args
        .evaluator
        .clone()
        .or_else(|| file.evaluator.clone())
        .ok_or_else(|| Failure::usage("--evaluator is required"))?;
    let source = Source::parse(&evaluator)?;
    let config = args
        .config
        .or(file.config)
        .or(source.config())
        .ok_or_else(|| Failure::usage("--config is required for pipeline evaluators"))?;
    let catalog_path = args.catalog.clone().or_else(|| file.catalog.clone());
    let catalog = load_catalog(catalog_path.as_deref())?;
    let sequences = args
        .sequences
        .clone()
        .or_else(|| file.sequences.clone())
        .unwrap_or_else(|| source.default_sequences());
    if sequences.is_empty() {
        return Err(Failure::usage("no sequences given and the evaluator defines none"));
    }
    let qps = args
        .qps
        .clone()
        .or_else(|| file.qps.clone())
        .unwrap_or_else(|| DEFAULT_QPS.to_vec());
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| Failure::usage("--out is required"))?;
    let run = RunConfig {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        evaluator,
        objective: args.objective.or(file.objective).unwrap_or_default(),
        method: args.method.or(file.method).unwrap_or_default(),
        sequences,
        qps,
        jobs: args.jobs.or(file.jobs).unwrap_or(1).max(1),
        seed: args.seed.or(file.seed).unwrap_or_else(|| source.seed()),
        catalog: catalog_path,
        catalog_name: catalog.name().to_string(),
        catalog_fingerprint: catalog.fingerprint(),
        cache: args.cache.clone().or_else(|| file.cache.clone()),
        out,
        tools: None,
        refine_evaluator: None,
        refine_sequences: None,
        sequential_accept: None,
        max_iterations: None,
        bdr_cap: None,
        ebe_k: None,
        svg: None,
    };
    Ok(Resolved {
        run,
        file,
        catalog,
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}
