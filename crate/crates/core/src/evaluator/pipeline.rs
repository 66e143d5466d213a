//! External encode/decode pipelines driven by shell command templates.
//!
//! A pipeline config names an encoder and a decoder command, how to render a
//! profile into encoder switches, and which regexes pull metrics from the
//! command output. Example (TOML):
//!
//! ```toml
//! encode = "EncoderApp -c cfg/encoder_randomaccess_vtm.cfg -i {input} -b {output} -q {qp} {switches}"
//! decode = "DecoderApp -b {input} -o {output}"
//! work_dir = "work"
//!
//! [sequences]
//! Tango2 = "/data/Tango2_3840x2160_60fps_10bit_420.yuv"
//!
//! [rename]
//! DBF = "DeblockingFilterDisable"
//!
//! [parse.rate_kbps]
//! stage = "encode"
//! regex = 'a\s+(\d+\.\d+)'
//!
//! [energy]
//! source = "counter:/sys/class/powercap/intel-rapl:0/energy_uj"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_request, EvalError, Evaluator, Purity};
use crate::bdmetrics::{RdCurve, RdPoint};
use crate::measurement::{source_from_spec, ConfidenceParams, MeasureError, MeasurementSession};
use crate::profiles::{ToolCatalog, ToolProfile};

/// A step of one pipeline run, used in error reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Encode,
    Decode,
    Parse,
    Measure,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Encode => "encode",
            Stage::Decode => "decode",
            Stage::Parse => "parse",
            Stage::Measure => "measure",
        })
    }
}

/// Regex whose first capture group holds the metric, searched in the
/// combined stdout and stderr of one stage. The last match wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseRule {
    pub stage: Stage,
    pub regex: String,
    /// Factor applied to the captured number, e.g. 1000 for Mbps logs.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    /// Energy source spec, see [`source_from_spec`].
    pub source: String,
    #[serde(default)]
    pub confidence: ConfidenceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub encode: String,
    pub decode: String,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    /// Format of one switch; `{name}` and `{value}` (0 or 1) are substituted.
    #[serde(default = "default_switch_format")]
    pub switch_format: String,
    /// Tool name to encoder flag name.
    #[serde(default)]
    pub rename: BTreeMap<String, String>,
    /// Sequence name to input path; unlisted names are passed through as paths.
    #[serde(default)]
    pub sequences: BTreeMap<String, String>,
    /// Metric name to rule. `rate_kbps` and `psnr_y` are required; `psnr_u`
    /// and `psnr_v` fall back to `psnr_y`; `vmaf` and `time_s` are optional.
    pub parse: BTreeMap<String, ParseRule>,
    #[serde(default)]
    pub energy: Option<EnergyConfig>,
    /// Declares the commands safe to run concurrently. Ignored when energy is
    /// measured.
    #[serde(default)]
    pub parallel: bool,
    /// Directory the commands run in; defaults to the config file's directory.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

fn default_switch_format() -> String {
    "--{name}={value}".into()
}

const METRICS: [&str; 7] = ["rate_kbps", "psnr_y", "psnr_u", "psnr_v", "vmaf", "time_s", "energy_j"];
const ENCODE_PLACEHOLDERS: [&str; 4] = ["{input}", "{output}", "{qp}", "{switches}"];
const DECODE_PLACEHOLDERS: [&str; 2] = ["{input}", "{output}"];
const KNOWN_PLACEHOLDERS: [&str; 6] = ["input", "output", "qp", "switches", "sequence", "profile"];

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_]+)\}").expect("valid regex"))
}

impl PipelineConfig {
    /// Loads TOML or JSON (by extension; `.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?
        };
        let abs = std::path::absolute(path).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = abs.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, EvalError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        let base_dir: PathBuf = base_dir.into();
        cfg.base_dir = std::path::absolute(&base_dir).unwrap_or(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        check_template("encode", &self.encode, &ENCODE_PLACEHOLDERS)?;
        check_template("decode", &self.decode, &DECODE_PLACEHOLDERS)?;
        if !(self.switch_format.contains("{name}") && self.switch_format.contains("{value}")) {
            return Err(EvalError::Config("switch_format needs {name} and {value}".into()));
        }
        for required in ["rate_kbps", "psnr_y"] {
            if !self.parse.contains_key(required) {
                return Err(EvalError::Config(format!("missing parse rule for `{required}`")));
            }
        }
        for (metric, rule) in &self.parse {
            if !METRICS.contains(&metric.as_str()) {
                return Err(EvalError::Config(format!("unknown metric `{metric}` in parse rules")));
            }
            if metric == "energy_j" && self.energy.is_some() {
                return Err(EvalError::Config("energy_j cannot be parsed when [energy] measurement is configured".into()));
            }
            compile_rule(metric, rule)?;
        }
        if let Some(energy) = &self.energy {
            energy
                .confidence
                .validate()
                .map_err(|e| EvalError::Config(format!("energy: {e}")))?;
        }
        Ok(())
    }
}

fn check_template(name: &str, template: &str, required: &[&str]) -> Result<(), EvalError> {
    for p in required {
        if !template.contains(p) {
            return Err(EvalError::Config(format!("{name} template lacks the {p} placeholder")));
        }
    }
    for cap in placeholder_regex().captures_iter(template) {
        if !KNOWN_PLACEHOLDERS.contains(&&cap[1]) {
            return Err(EvalError::Config(format!("{name} template has unknown placeholder {{{}}}", &cap[1])));
        }
    }
    Ok(())
}

fn compile_rule(metric: &str, rule: &ParseRule) -> Result<Regex, EvalError> {
    let re = Regex::new(&rule.regex).map_err(|e| EvalError::Config(format!("parse rule `{metric}`: {e}")))?;
    if re.captures_len() < 2 {
        return Err(EvalError::Config(format!("parse rule `{metric}` has no capture group")));
    }
    Ok(re)
}

/// Single-quotes a value for `sh`.
fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn render(template: &str, values: &BTreeMap<&str, String>) -> String {
    placeholder_regex()
        .replace_all(template, |cap: &regex::Captures| values.get(&cap[1]).cloned().unwrap_or_default())
        .into_owned()
}

struct Rule {
    metric: String,
    stage: Stage,
    regex: Regex,
    scale: f64,
}

/// Evaluator that shells out to real encode and decode commands.
pub struct PipelineEvaluator {
    cfg: PipelineConfig,
    catalog: ToolCatalog,
    rules: Vec<Rule>,
    session: Option<Mutex<MeasurementSession>>,
    serial: Mutex<()>,
}

struct RunContext<'a> {
    profile_id: &'a str,
    sequence: &'a str,
    qp: i32,
}

impl RunContext<'_> {
    fn stage_err(&self, stage: Stage, detail: impl Into<String>) -> EvalError {
        EvalError::Stage {
            profile_id: self.profile_id.to_string(),
            sequence: self.sequence.to_string(),
            qp: self.qp,
            stage,
            detail: detail.into(),
        }
    }
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

impl PipelineEvaluator {
    pub fn new(cfg: PipelineConfig, catalog: &ToolCatalog) -> Result<Self, EvalError> {
        cfg.validate()?;
        let rules = cfg
            .parse
            .iter()
            .map(|(metric, rule)| {
                Ok(Rule {
                    metric: metric.clone(),
                    stage: rule.stage,
                    regex: compile_rule(metric, rule)?,
                    scale: rule.scale,
                })
            })
            .collect::<Result<_, EvalError>>()?;
        let session = match &cfg.energy {
            None => None,
            Some(e) => {
                let source = source_from_spec(&e.source).map_err(|err| EvalError::Config(format!("energy: {err}")))?;
                let session =
                    MeasurementSession::new(source, e.confidence).map_err(|err| EvalError::Config(format!("energy: {err}")))?;
                Some(Mutex::new(session))
            }
        };
        Ok(PipelineEvaluator {
            cfg,
            catalog: catalog.clone(),
            rules,
            session,
            serial: Mutex::new(()),
        })
    }

    /// Encoder switches for `profile`: every applicable tool in catalog order,
    /// then the derived switches.
    pub fn switches(&self, profile: &ToolProfile) -> Vec<String> {
        let fmt = |name: &str, on: bool| {
            let flag = self.cfg.rename.get(name).map(String::as_str).unwrap_or(name);
            self.cfg
                .switch_format
                .replace("{name}", flag)
                .replace("{value}", if on { "1" } else { "0" })
        };
        let mut out: Vec<String> = self
            .catalog
            .applicable(profile.config())
            .map(|t| fmt(&t.name, profile.get(&t.name).unwrap_or(false)))
            .collect();
        out.extend(profile.derived_switches().iter().map(|(n, on)| fmt(n, *on)));
        out
    }

    fn run_shell(&self, ctx: &RunContext, stage: Stage, cmd: &str) -> Result<String, EvalError> {
        let out = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .current_dir(if self.cfg.base_dir.as_os_str().is_empty() {
                Path::new(".")
            } else {
                &self.cfg.base_dir
            })
            .output()
            .map_err(|e| ctx.stage_err(stage, format!("could not spawn `sh`: {e}")))?;
        let mut text = String::from_utf8_lossy(&out.stdout).into_owned();
        text.push_str(&String::from_utf8_lossy(&out.stderr));
        if !out.status.success() {
            return Err(ctx.stage_err(
                stage,
                format!("command exited with {}; output tail:\n{}", out.status, tail(&text, 10)),
            ));
        }
        Ok(text)
    }

    fn parse(&self, ctx: &RunContext, logs: &BTreeMap<Stage, String>) -> Result<BTreeMap<String, f64>, EvalError> {
        let mut values = BTreeMap::new();
        for rule in &self.rules {
            let text = logs.get(&rule.stage).map(String::as_str).unwrap_or("");
            let cap = rule
                .regex
                .captures_iter(text)
                .last()
                .ok_or_else(|| ctx.stage_err(Stage::Parse, format!("no match for `{}` in {} output", rule.metric, rule.stage)))?;
            let raw = &cap[1];
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| ctx.stage_err(Stage::Parse, format!("`{}` captured non-number `{raw}`", rule.metric)))?;
            values.insert(rule.metric.clone(), v * rule.scale);
        }
        Ok(values)
    }

    fn run_point(&self, profile: &ToolProfile, switches: &str, sequence: &str, qp: i32) -> Result<RdPoint, EvalError> {
        let profile_id = profile.id();
        let ctx = RunContext {
            profile_id: &profile_id,
            sequence,
            qp,
        };
        let base = if self.cfg.base_dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            self.cfg.base_dir.clone()
        };
        let dir = base.join(&self.cfg.work_dir).join(&profile_id);
        std::fs::create_dir_all(&dir).map_err(|e| ctx.stage_err(Stage::Encode, format!("{}: {e}", dir.display())))?;
        let stem = format!("{sequence}_qp{qp}");
        let bitstream = dir.join(format!("{stem}.bin"));
        let recon = dir.join(format!("{stem}.yuv"));
        let input = self.cfg.sequences.get(sequence).cloned().unwrap_or_else(|| sequence.to_string());

        let mut values = BTreeMap::new();
        values.insert("sequence", shell_quote(sequence));
        values.insert("profile", shell_quote(&profile_id));
        values.insert("qp", qp.to_string());
        values.insert("switches", switches.to_string());
        values.insert("input", shell_quote(&input));
        values.insert("output", shell_quote(&bitstream.to_string_lossy()));
        let encode_cmd = render(&self.cfg.encode, &values);
        values.insert("input", shell_quote(&bitstream.to_string_lossy()));
        values.insert("output", shell_quote(&recon.to_string_lossy()));
        let decode_cmd = render(&self.cfg.decode, &values);

        let mut logs = BTreeMap::new();
        logs.insert(Stage::Encode, self.run_shell(&ctx, Stage::Encode, &encode_cmd)?);

        let (decode_log, energy_j, time_s) = match &self.session {
            None => {
                let start = Instant::now();
                let log = self.run_shell(&ctx, Stage::Decode, &decode_cmd)?;
                (log, None, start.elapsed().as_secs_f64())
            }
            Some(session) => {
                let mut session = session.lock().unwrap_or_else(|e| e.into_inner());
                let mut last_log = String::new();
                let mut failure = None;
                let result = session.measure_until_confident(&mut || match self.run_shell(&ctx, Stage::Decode, &decode_cmd) {
                    Ok(log) => {
                        last_log = log;
                        Ok(())
                    }
                    Err(e) => {
                        let msg = e.to_string();
                        failure = Some(e);
                        Err(MeasureError::Task(msg))
                    }
                });
                if let Some(e) = failure {
                    return Err(e);
                }
                let series = result.map_err(|source| EvalError::Measurement {
                    profile_id: profile_id.clone(),
                    sequence: sequence.to_string(),
                    qp,
                    source,
                })?;
                if !series.converged {
                    return Err(EvalError::NonConverged {
                        profile_id: profile_id.clone(),
                        sequence: sequence.to_string(),
                        qp,
                        m: series.m,
                    });
                }
                (last_log, Some(series.mean), series.mean_duration())
            }
        };
        logs.insert(Stage::Decode, decode_log);

        let m = self.parse(&ctx, &logs)?;
        let psnr_y = m["psnr_y"];
        Ok(RdPoint {
            qp,
            rate_kbps: m["rate_kbps"],
            psnr_y,
            psnr_u: m.get("psnr_u").copied().unwrap_or(psnr_y),
            psnr_v: m.get("psnr_v").copied().unwrap_or(psnr_y),
            vmaf: m.get("vmaf").copied(),
            energy_j: energy_j.or(m.get("energy_j").copied()),
            time_s: Some(m.get("time_s").copied().unwrap_or(time_s)),
        })
    }
}

impl Evaluator for PipelineEvaluator {
    fn analyze(&self, profile: &ToolProfile, sequences: &[String], qps: &[i32]) -> Result<Vec<RdCurve>, EvalError> {
        check_request(sequences, qps)?;
        self.catalog.validate(profile)?;
        let _serial = match self.purity() {
            Purity::ExclusiveSerial => Some(self.serial.lock().unwrap_or_else(|e| e.into_inner())),
            Purity::PureParallel => None,
        };
        let switches = self.switches(profile).join(" ");
        let id = profile.id();
        sequences
            .iter()
            .map(|seq| {
                let points = qps
                    .iter()
                    .map(|qp| self.run_point(profile, &switches, seq, *qp))
                    .collect::<Result<Vec<_>, _>>()?;
                RdCurve::new(id.clone(), seq.clone(), points).map_err(|source| EvalError::Curve {
                    profile_id: id.clone(),
                    sequence: seq.clone(),
                    source,
                })
            })
            .collect()
    }

    fn purity(&self) -> Purity {
        if self.cfg.parallel && self.session.is_none() {
            Purity::PureParallel
        } else {
            Purity::ExclusiveSerial
        }
    }

    fn describe(&self) -> String {
        format!("pipeline `{}` / `{}`", self.cfg.encode, self.cfg.decode)
    }
}
