//! Energy source adapters.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::MeasureError;

/// Gross energy and wall time of one task run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Reading {
    pub energy_j: f64,
    pub duration_s: f64,
}

pub trait EnergySource {
    /// Runs `task` once and reports the gross energy drawn while it ran.
    fn measure_task(&mut self, task: &mut dyn FnMut() -> Result<(), MeasureError>) -> Result<Reading, MeasureError>;

    /// Energy in joules drawn over an idle window of `duration_s`.
    fn measure_idle(&mut self, duration_s: f64) -> Result<f64, MeasureError>;
}

/// A monotonically increasing microjoule counter.
pub trait CounterReader {
    fn read_uj(&mut self) -> Result<u64, MeasureError>;
}

/// Counter exposed as a text file holding one integer, e.g. a powercap
/// `energy_uj` node.
#[derive(Debug, Clone)]
pub struct FileCounter {
    path: PathBuf,
}

impl FileCounter {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileCounter { path: path.into() }
    }

    /// Reads the sibling `max_energy_range_uj` file, if present.
    pub fn sibling_modulus(&self) -> Option<u64> {
        let dir = self.path.parent()?;
        read_u64(&dir.join("max_energy_range_uj")).ok()
    }
}

fn read_u64(path: &Path) -> Result<u64, MeasureError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeasureError::Source(format!("{}: {e}", path.display())))?;
    text.trim()
        .parse()
        .map_err(|e| MeasureError::Source(format!("{}: {e}", path.display())))
}

impl CounterReader for FileCounter {
    fn read_uj(&mut self) -> Result<u64, MeasureError> {
        read_u64(&self.path)
    }
}

/// Replays a fixed list of counter values.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCounter {
    values: VecDeque<u64>,
}

impl ScriptedCounter {
    pub fn new(values: impl IntoIterator<Item = u64>) -> Self {
        ScriptedCounter {
            values: values.into_iter().collect(),
        }
    }
}

impl CounterReader for ScriptedCounter {
    fn read_uj(&mut self) -> Result<u64, MeasureError> {
        self.values
            .pop_front()
            .ok_or_else(|| MeasureError::Source("scripted counter exhausted".into()))
    }
}

/// Difference of two counter readings, correcting a single wraparound.
pub(crate) fn counter_delta(before: u64, after: u64, modulus: Option<u64>) -> Result<u64, MeasureError> {
    if after >= before {
        return Ok(after - before);
    }
    match modulus {
        Some(m) if before < m => Ok(m - before + after),
        _ => Err(MeasureError::CounterWrap { before, after }),
    }
}

/// Cumulative-counter source timed by the wall clock.
pub struct CounterSource<R> {
    reader: R,
    modulus_uj: Option<u64>,
    sleep_idle: bool,
}

impl<R: CounterReader> CounterSource<R> {
    pub fn new(reader: R, modulus_uj: Option<u64>) -> Self {
        CounterSource {
            reader,
            modulus_uj,
            sleep_idle: true,
        }
    }

    /// Reads idle counters back to back without sleeping; for scripted counters.
    pub fn without_idle_sleep(mut self) -> Self {
        self.sleep_idle = false;
        self
    }

    fn joules(&self, before: u64, after: u64) -> Result<f64, MeasureError> {
        Ok(counter_delta(before, after, self.modulus_uj)? as f64 * 1e-6)
    }
}

impl<R: CounterReader> EnergySource for CounterSource<R> {
    fn measure_task(&mut self, task: &mut dyn FnMut() -> Result<(), MeasureError>) -> Result<Reading, MeasureError> {
        let before = self.reader.read_uj()?;
        let start = Instant::now();
        task()?;
        let duration_s = start.elapsed().as_secs_f64();
        let after = self.reader.read_uj()?;
        Ok(Reading {
            energy_j: self.joules(before, after)?,
            duration_s,
        })
    }

    fn measure_idle(&mut self, duration_s: f64) -> Result<f64, MeasureError> {
        let before = self.reader.read_uj()?;
        if self.sleep_idle {
            std::thread::sleep(Duration::from_secs_f64(duration_s));
        }
        let after = self.reader.read_uj()?;
        self.joules(before, after)
    }
}

/// Wall-clock time multiplied by a constant power draw.
#[derive(Debug, Clone)]
pub struct WallClockPower {
    pub task_power_w: f64,
    pub idle_power_w: f64,
}

impl EnergySource for WallClockPower {
    fn measure_task(&mut self, task: &mut dyn FnMut() -> Result<(), MeasureError>) -> Result<Reading, MeasureError> {
        let start = Instant::now();
        task()?;
        let duration_s = start.elapsed().as_secs_f64();
        Ok(Reading {
            energy_j: self.task_power_w * duration_s,
            duration_s,
        })
    }

    fn measure_idle(&mut self, duration_s: f64) -> Result<f64, MeasureError> {
        Ok(self.idle_power_w * duration_s)
    }
}

enum Script {
    Constant(Reading),
    Gaussian {
        rng: ChaCha8Rng,
        net: Normal<f64>,
        duration_s: f64,
    },
    Replay(VecDeque<Reading>),
}

/// Deterministic readings for tests and dry runs. The task still runs, but
/// its cost is taken from the script rather than from hardware.
pub struct ScriptedSource {
    script: Script,
    idle_power_w: f64,
}

impl ScriptedSource {
    /// Every run reports the same reading.
    pub fn constant(reading: Reading, idle_power_w: f64) -> Self {
        ScriptedSource {
            script: Script::Constant(reading),
            idle_power_w,
        }
    }

    /// Net energy drawn from `N(mean, (cv * mean)^2)`, seeded.
    pub fn gaussian(mean_net_j: f64, cv: f64, duration_s: f64, idle_power_w: f64, seed: u64) -> Result<Self, MeasureError> {
        let net = Normal::new(mean_net_j, cv * mean_net_j).map_err(|e| MeasureError::InvalidParams(e.to_string()))?;
        Ok(ScriptedSource {
            script: Script::Gaussian {
                rng: ChaCha8Rng::seed_from_u64(seed),
                net,
                duration_s,
            },
            idle_power_w,
        })
    }

    /// Replays readings in order; fails once they run out.
    pub fn replay(readings: impl IntoIterator<Item = Reading>, idle_power_w: f64) -> Self {
        ScriptedSource {
            script: Script::Replay(readings.into_iter().collect()),
            idle_power_w,
        }
    }
}

impl EnergySource for ScriptedSource {
    fn measure_task(&mut self, task: &mut dyn FnMut() -> Result<(), MeasureError>) -> Result<Reading, MeasureError> {
        task()?;
        match &mut self.script {
            Script::Constant(r) => Ok(*r),
            Script::Gaussian { rng, net, duration_s } => Ok(Reading {
                energy_j: net.sample(rng) + self.idle_power_w * *duration_s,
                duration_s: *duration_s,
            }),
            Script::Replay(q) => q
                .pop_front()
                .ok_or_else(|| MeasureError::Source("replay trace exhausted".into())),
        }
    }

    fn measure_idle(&mut self, duration_s: f64) -> Result<f64, MeasureError> {
        Ok(self.idle_power_w * duration_s)
    }
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayFile {
    #[serde(default)]
    idle_power_w: f64,
    readings: Vec<Reading>,
}

fn spec_num<T: std::str::FromStr>(spec: &str, field: Option<&str>, default: T) -> Result<T, MeasureError> {
    match field {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| MeasureError::InvalidParams(format!("bad number `{s}` in source `{spec}`"))),
    }
}

/// Builds an energy source from a textual spec:
///
/// * `counter:<path>[@<modulus_uj>]` reads a microjoule counter file; the wrap
///   modulus defaults to a sibling `max_energy_range_uj`.
/// * `stub:constant[:<joules>[:<seconds>]]`, every run costs the same (idle 0 W).
/// * `stub:gaussian:<mean_j>:<cv>[:<seed>]`, net energy drawn per run.
/// * `stub:power:<watts>[:<idle_watts>]`, wall time times constant power.
/// * `replay:<file.json>` with `{"idle_power_w":..,"readings":[{"energy_j":..,"duration_s":..}]}`.
pub fn source_from_spec(spec: &str) -> Result<Box<dyn EnergySource + Send>, MeasureError> {
    let bad = || MeasureError::InvalidParams(format!("unrecognized energy source `{spec}`"));
    if let Some(rest) = spec.strip_prefix("counter:") {
        let (path, modulus) = match rest.rsplit_once('@') {
            Some((p, m)) => (p, Some(spec_num(spec, Some(m), 0u64)?)),
            None => (rest, None),
        };
        if path.is_empty() {
            return Err(bad());
        }
        let counter = FileCounter::new(path);
        let modulus = modulus.or_else(|| counter.sibling_modulus());
        return Ok(Box::new(CounterSource::new(counter, modulus)));
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        let text = std::fs::read_to_string(path).map_err(|e| MeasureError::Source(format!("{path}: {e}")))?;
        let file: ReplayFile =
            serde_json::from_str(&text).map_err(|e| MeasureError::InvalidParams(format!("{path}: {e}")))?;
        return Ok(Box::new(ScriptedSource::replay(file.readings, file.idle_power_w)));
    }
    let Some(rest) = spec.strip_prefix("stub:") else {
        return Err(bad());
    };
    let mut parts = rest.split(':');
    let kind = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let arg = |i: usize| args.get(i).copied();
    let source: Box<dyn EnergySource + Send> = match kind {
        "constant" if args.len() <= 2 => Box::new(ScriptedSource::constant(
            Reading {
                energy_j: spec_num(spec, arg(0), 10.0)?,
                duration_s: spec_num(spec, arg(1), 1.0)?,
            },
            0.0,
        )),
        "gaussian" if (2..=3).contains(&args.len()) => Box::new(ScriptedSource::gaussian(
            spec_num(spec, arg(0), 0.0)?,
            spec_num(spec, arg(1), 0.0)?,
            1.0,
            0.0,
            spec_num(spec, arg(2), 0u64)?,
        )?),
        "power" if (1..=2).contains(&args.len()) => Box::new(WallClockPower {
            task_power_w: spec_num(spec, arg(0), 0.0)?,
            idle_power_w: spec_num(spec, arg(1), 0.0)?,
        }),
        _ => return Err(bad()),
    };
    Ok(source)
}
