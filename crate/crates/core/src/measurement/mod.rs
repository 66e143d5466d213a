//! Repeated energy measurement with a confidence-interval stopping rule.
//!
//! A task (typically one decoder run) is executed repeatedly. Each run yields
//! a net energy sample, gross energy minus the idle energy drawn over the same
//! duration. Sampling stops once
//!
//! ```text
//! 2 * (sigma / sqrt(m)) * t(m - 1) < beta * mean
//! ```
//!
//! holds, i.e. the confidence interval of the mean is narrower than a
//! relative band of width `beta`.

mod source;
mod student_t;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use source::{
    source_from_spec, CounterReader, CounterSource, EnergySource, FileCounter, Reading, ScriptedCounter,
    ScriptedSource, WallClockPower,
};
pub use student_t::{t_critical, t_quantile, Sidedness};

/// Serializes measurement sessions process-wide: one task owns the machine.
static MACHINE: Mutex<()> = Mutex::new(());

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid measurement parameters: {0}")]
    InvalidParams(String),
    #[error("degrees of freedom must be at least 1")]
    DegreesOfFreedom,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("mean net energy {0} J is not positive; idle subtraction removed everything")]
    NonPositiveMean(f64),
    #[error("energy counter went backwards ({before} -> {after}) and no wrap modulus is known")]
    CounterWrap { before: u64, after: u64 },
    #[error("energy source: {0}")]
    Source(String),
    #[error("task failed: {0}")]
    Task(String),
}

/// Parameters of the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfidenceParams {
    /// Maximum relative deviation of the mean.
    pub beta: f64,
    /// Confidence probability.
    pub alpha: f64,
    pub m_min: usize,
    pub m_max: usize,
    pub sidedness: Sidedness,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams {
            beta: 0.02,
            alpha: 0.99,
            m_min: 5,
            m_max: 1000,
            sidedness: Sidedness::TwoSided,
        }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(MeasureError::InvalidParams(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            return Err(MeasureError::InvalidParams(format!("alpha must be in (0.5, 1), got {}", self.alpha)));
        }
        if !(2 <= self.m_min && self.m_min <= self.m_max) {
            return Err(MeasureError::InvalidParams(format!(
                "need 2 <= m_min <= m_max, got m_min={} m_max={}",
                self.m_min, self.m_max
            )));
        }
        Ok(())
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

/// Left-hand side of the stopping inequality, the full confidence interval width.
pub fn interval_width(stddev: f64, m: usize, params: &ConfidenceParams) -> Result<f64, MeasureError> {
    if m < 2 {
        return Err(MeasureError::TooFewSamples(m));
    }
    let t = t_critical(params.alpha, (m - 1) as u64, params.sidedness)?;
    Ok(2.0 * stddev / (m as f64).sqrt() * t)
}

/// Evaluates the stopping rule on raw samples; also requires `m >= m_min`.
pub fn converged(samples: &[f64], params: &ConfidenceParams) -> Result<bool, MeasureError> {
    let m = samples.len();
    if m < 2 {
        return Err(MeasureError::TooFewSamples(m));
    }
    let (mean, sd) = mean_std(samples);
    if mean <= 0.0 {
        return Err(MeasureError::NonPositiveMean(mean));
    }
    if m < params.m_min {
        return Ok(false);
    }
    Ok(interval_width(sd, m, params)? < params.beta * mean)
}

/// Net energy samples of one task plus the statistics the stopping rule used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSeries {
    /// Net energy per run in joules.
    pub samples: Vec<f64>,
    pub gross: Vec<f64>,
    pub durations: Vec<f64>,
    pub m: usize,
    pub mean: f64,
    pub stddev: f64,
    pub converged: bool,
    pub idle_power_w: f64,
    pub params: ConfidenceParams,
}

impl MeasurementSeries {
    fn from_runs(gross: Vec<f64>, durations: Vec<f64>, idle_power_w: f64, params: ConfidenceParams) -> Result<Self, MeasureError> {
        let samples: Vec<f64> = gross
            .iter()
            .zip(&durations)
            .map(|(g, d)| g - idle_power_w * d)
            .collect();
        let (mean, stddev) = mean_std(&samples);
        let conv = if samples.len() >= 2 {
            converged(&samples, &params)?
        } else {
            false
        };
        Ok(MeasurementSeries {
            m: samples.len(),
            samples,
            gross,
            durations,
            mean,
            stddev,
            converged: conv,
            idle_power_w,
            params,
        })
    }

    pub fn mean_duration(&self) -> f64 {
        self.durations.iter().sum::<f64>() / self.durations.len().max(1) as f64
    }

    /// Confidence interval width at the current `m`.
    pub fn interval_width(&self) -> Result<f64, MeasureError> {
        interval_width(self.stddev, self.m, &self.params)
    }
}

/// How often idle power is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdleMode {
    /// Once per session, re-measured only when a run outlasts the current window.
    #[default]
    PerSession,
    /// After every run, over that run's duration.
    PerRun,
}

/// A measurement session owning one energy source.
pub struct MeasurementSession {
    source: Box<dyn EnergySource + Send>,
    params: ConfidenceParams,
    idle_mode: IdleMode,
    idle_power_w: Option<f64>,
    idle_window_s: f64,
}

impl MeasurementSession {
    pub fn new(source: Box<dyn EnergySource + Send>, params: ConfidenceParams) -> Result<Self, MeasureError> {
        params.validate()?;
        Ok(MeasurementSession {
            source,
            params,
            idle_mode: IdleMode::PerSession,
            idle_power_w: None,
            idle_window_s: 0.0,
        })
    }

    pub fn with_idle_mode(mut self, mode: IdleMode) -> Self {
        self.idle_mode = mode;
        self
    }

    /// Uses a known idle power instead of measuring it.
    pub fn with_idle_power(mut self, watts: f64) -> Self {
        self.idle_power_w = Some(watts);
        self.idle_window_s = f64::INFINITY;
        self
    }

    pub fn params(&self) -> &ConfidenceParams {
        &self.params
    }

    pub fn idle_power(&self) -> Option<f64> {
        self.idle_power_w
    }

    /// Forgets the idle measurement so the next run measures it again.
    pub fn remeasure_idle(&mut self) {
        self.idle_power_w = None;
        self.idle_window_s = 0.0;
    }

    fn update_idle(&mut self, duration_s: f64) -> Result<f64, MeasureError> {
        let stale = match self.idle_mode {
            IdleMode::PerRun => true,
            IdleMode::PerSession => self.idle_power_w.is_none() || duration_s > self.idle_window_s,
        };
        if stale {
            let power = if duration_s > 0.0 {
                self.source.measure_idle(duration_s)? / duration_s
            } else {
                0.0
            };
            self.idle_power_w = Some(power);
            self.idle_window_s = self.idle_window_s.max(duration_s);
        }
        Ok(self.idle_power_w.unwrap_or(0.0))
    }

    /// Runs `task` until the stopping rule holds or `m_max` runs are done.
    ///
    /// Hitting `m_max` is not an error: the returned series has
    /// `converged == false` and the caller decides what to do.
    pub fn measure_until_confident(
        &mut self,
        task: &mut dyn FnMut() -> Result<(), MeasureError>,
    ) -> Result<MeasurementSeries, MeasureError> {
        let _machine = MACHINE.lock().unwrap_or_else(|e| e.into_inner());
        let mut gross = Vec::new();
        let mut durations = Vec::new();
        // Per-run idle values, used only in PerRun mode.
        let mut idle_energy = Vec::new();
        loop {
            let reading = self.source.measure_task(task)?;
            let idle_power = self.update_idle(reading.duration_s)?;
            gross.push(reading.energy_j);
            durations.push(reading.duration_s);
            idle_energy.push(idle_power * reading.duration_s);

            let series = match self.idle_mode {
                IdleMode::PerSession => MeasurementSeries::from_runs(gross.clone(), durations.clone(), idle_power, self.params)?,
                IdleMode::PerRun => {
                    let net_gross: Vec<f64> = gross.iter().zip(&idle_energy).map(|(g, i)| g - i).collect();
                    let mut s = MeasurementSeries::from_runs(net_gross, durations.clone(), 0.0, self.params)?;
                    s.gross = gross.clone();
                    s.idle_power_w = idle_power;
                    s
                }
            };
            if series.converged || series.m >= self.params.m_max {
                return Ok(series);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ConfidenceParams {
        ConfidenceParams::default()
    }

    #[test]
    fn param_validation() {
        assert!(params().validate().is_ok());
        for bad in [
            ConfidenceParams { beta: 0.0, ..params() },
            ConfidenceParams { beta: 1.0, ..params() },
            ConfidenceParams { alpha: 0.5, ..params() },
            ConfidenceParams { alpha: 1.0, ..params() },
            ConfidenceParams { m_min: 1, ..params() },
            ConfidenceParams { m_min: 10, m_max: 9, ..params() },
        ] {
            assert!(matches!(bad.validate(), Err(MeasureError::InvalidParams(_))));
        }
    }

    #[test]
    fn zero_spread_converges_at_m_min() {
        let p = params();
        assert!(!converged(&[10.0; 4], &p).unwrap());
        assert!(converged(&[10.0; 5], &p).unwrap());
    }

    #[test]
    fn outlier_blocks_convergence() {
        let mut s = vec![100.0; 5];
        s.push(500.0);
        assert!(!converged(&s, &params()).unwrap());
        // Direct arithmetic: mean 166.67, sd 163.30, t(0.995, 5) = 4.0321.
        let width = interval_width(163.299_316, 6, &params()).unwrap();
        assert!((width - 537.6).abs() < 0.1, "{width}");
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(converged(&[0.0, 0.0, 0.0, 0.0, 0.0], &params()), Err(MeasureError::NonPositiveMean(0.0)));
        assert_eq!(converged(&[1.0], &params()), Err(MeasureError::TooFewSamples(1)));
    }

    #[test]
    fn converged_is_monotone_in_beta() {
        let s = [100.0, 101.0, 99.5, 100.4, 98.9, 100.8, 99.7];
        let mut seen = false;
        for i in 1..200 {
            let p = ConfidenceParams { beta: i as f64 / 1000.0, ..params() };
            let c = converged(&s, &p).unwrap();
            assert!(!seen || c, "lost convergence at beta={}", p.beta);
            seen |= c;
        }
        assert!(seen);
    }

    #[test]
    fn constant_source_stops_at_m_min() {
        let src = ScriptedSource::constant(Reading { energy_j: 12.0, duration_s: 2.0 }, 1.0);
        let mut session = MeasurementSession::new(Box::new(src), params()).unwrap();
        let mut runs = 0;
        let series = session
            .measure_until_confident(&mut || {
                runs += 1;
                Ok(())
            })
            .unwrap();
        assert!(series.converged);
        assert_eq!(series.m, 5);
        assert_eq!(runs, 5);
        // 12 J gross minus 1 W idle over 2 s.
        assert!(series.samples.iter().all(|s| *s == 10.0));
        assert_eq!(series.idle_power_w, 1.0);
    }

    #[test]
    fn idle_window_grows_with_longest_run() {
        let readings = vec![
            Reading { energy_j: 10.0, duration_s: 1.0 },
            Reading { energy_j: 20.0, duration_s: 2.0 },
            Reading { energy_j: 10.0, duration_s: 1.0 },
        ];
        let src = ScriptedSource::replay(readings, 2.0);
        let p = ConfidenceParams { m_min: 2, m_max: 3, ..params() };
        let mut session = MeasurementSession::new(Box::new(src), p).unwrap();
        let s = session.measure_until_confident(&mut || Ok(())).unwrap();
        assert_eq!(s.samples, vec![8.0, 16.0, 8.0]);
        assert!(!s.converged);
        assert_eq!(s.m, 3);
    }

    #[test]
    fn non_positive_net_energy_is_an_error() {
        let src = ScriptedSource::constant(Reading { energy_j: 1.0, duration_s: 1.0 }, 5.0);
        let mut session = MeasurementSession::new(Box::new(src), params()).unwrap();
        assert!(matches!(
            session.measure_until_confident(&mut || Ok(())),
            Err(MeasureError::NonPositiveMean(_))
        ));
    }

    #[test]
    fn task_failure_propagates() {
        let src = ScriptedSource::constant(Reading { energy_j: 1.0, duration_s: 1.0 }, 0.0);
        let mut session = MeasurementSession::new(Box::new(src), params()).unwrap();
        let err = session
            .measure_until_confident(&mut || Err(MeasureError::Task("boom".into())))
            .unwrap_err();
        assert_eq!(err, MeasureError::Task("boom".into()));
    }

    #[test]
    fn per_run_idle_mode() {
        let src = ScriptedSource::constant(Reading { energy_j: 12.0, duration_s: 2.0 }, 1.0);
        let mut session = MeasurementSession::new(Box::new(src), params())
            .unwrap()
            .with_idle_mode(IdleMode::PerRun);
        let s = session.measure_until_confident(&mut || Ok(())).unwrap();
        assert_eq!(s.samples, vec![10.0; 5]);
        assert_eq!(s.gross, vec![12.0; 5]);
    }
}
