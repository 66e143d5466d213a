//! Quality aggregates and Bjontegaard-Delta (BD) differences between two
//! operating curves.
//!
//! Every BD value here is computed the same way: each curve is turned into an
//! interpolant of `log10(cost)` over quality, both are integrated over the
//! common quality interval, and the mean log difference is mapped back to a
//! percentage, `(10^mean - 1) * 100`. Negative values mean the test curve is
//! cheaper than the reference at equal quality.

mod interp;
pub mod rdcsv;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use interp::InterpolationMethod;
use interp::Interpolant;

/// Minimum operating points per curve.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdError {
    #[error("non-finite input")]
    NonFinite,
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("costs must be positive, got {0}")]
    NonPositiveCost(f64),
    #[error("quality is not strictly increasing with cost: {0}")]
    NonMonotone(String),
    #[error("duplicate QP {0}")]
    DuplicateQp(i32),
    #[error("empty overlap: quality ranges [{ref_lo}, {ref_hi}] and [{test_lo}, {test_hi}] do not intersect")]
    EmptyOverlap {
        ref_lo: f64,
        ref_hi: f64,
        test_lo: f64,
        test_hi: f64,
    },
    #[error("curve `{curve}` lacks {axis} values")]
    MissingAxis { curve: String, axis: String },
    #[error("VMAF score {0} outside [0, 100]")]
    VmafRange(f64),
    #[error("interpolation fit failed: {0}")]
    Fit(String),
    #[error("unknown interpolation method `{0}`")]
    UnknownMethod(String),
    #[error("cannot aggregate an empty group `{0}`")]
    EmptyGroup(String),
    #[error("curve `{curve}`: {source}")]
    InCurve {
        curve: String,
        #[source]
        source: Box<BdError>,
    },
    #[error("csv: {0}")]
    Csv(String),
}

impl BdError {
    fn in_curve(self, curve: &str) -> BdError {
        match self {
            e @ (BdError::InCurve { .. } | BdError::EmptyOverlap { .. } | BdError::MissingAxis { .. }) => e,
            e => BdError::InCurve {
                curve: curve.to_string(),
                source: Box::new(e),
            },
        }
    }
}

/// Luma-weighted PSNR over the three colour components, `(6y + u + v) / 8`.
pub fn psnr_yuv(y: f64, u: f64, v: f64) -> Result<f64, BdError> {
    if !(y.is_finite() && u.is_finite() && v.is_finite()) {
        return Err(BdError::NonFinite);
    }
    Ok((6.0 * y + u + v) / 8.0)
}

/// Cost dimension of a BD comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostAxis {
    Rate,
    Energy,
    Time,
}

/// Quality dimension of a BD comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityAxis {
    Psnr,
    Vmaf,
}

impl std::fmt::Display for CostAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostAxis::Rate => "rate",
            CostAxis::Energy => "energy",
            CostAxis::Time => "time",
        })
    }
}

impl std::fmt::Display for QualityAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QualityAxis::Psnr => "PSNR_YUV",
            QualityAxis::Vmaf => "VMAF",
        })
    }
}

/// One operating point of a coded sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub qp: i32,
    pub rate_kbps: f64,
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    #[serde(default)]
    pub vmaf: Option<f64>,
    #[serde(default)]
    pub energy_j: Option<f64>,
    #[serde(default)]
    pub time_s: Option<f64>,
}

impl RdPoint {
    pub fn psnr_yuv(&self) -> f64 {
        (6.0 * self.psnr_y + self.psnr_u + self.psnr_v) / 8.0
    }

    pub fn cost(&self, axis: CostAxis) -> Option<f64> {
        match axis {
            CostAxis::Rate => Some(self.rate_kbps),
            CostAxis::Energy => self.energy_j,
            CostAxis::Time => self.time_s,
        }
    }

    pub fn quality(&self, axis: QualityAxis) -> Option<f64> {
        match axis {
            QualityAxis::Psnr => Some(self.psnr_yuv()),
            QualityAxis::Vmaf => self.vmaf,
        }
    }

    pub fn validate(&self) -> Result<(), BdError> {
        if !(self.rate_kbps.is_finite() && self.psnr_y.is_finite() && self.psnr_u.is_finite() && self.psnr_v.is_finite()) {
            return Err(BdError::NonFinite);
        }
        if self.rate_kbps <= 0.0 {
            return Err(BdError::NonPositiveCost(self.rate_kbps));
        }
        for v in [self.energy_j, self.time_s].into_iter().flatten() {
            if !v.is_finite() {
                return Err(BdError::NonFinite);
            }
            if v <= 0.0 {
                return Err(BdError::NonPositiveCost(v));
            }
        }
        if let Some(v) = self.vmaf {
            if !(0.0..=100.0).contains(&v) {
                return Err(BdError::VmafRange(v));
            }
        }
        Ok(())
    }
}

/// The operating curve of one profile on one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    pub profile_id: String,
    pub sequence: String,
    pub points: Vec<RdPoint>,
}

impl RdCurve {
    /// Builds a curve sorted by QP and checks point validity, QP uniqueness
    /// and rate/PSNR monotonicity.
    pub fn new(
        profile_id: impl Into<String>,
        sequence: impl Into<String>,
        mut points: Vec<RdPoint>,
    ) -> Result<Self, BdError> {
        let profile_id = profile_id.into();
        points.sort_by_key(|p| p.qp);
        let curve = RdCurve {
            profile_id,
            sequence: sequence.into(),
            points,
        };
        curve.validate().map_err(|e| e.in_curve(&curve.profile_id))?;
        Ok(curve)
    }

    fn validate(&self) -> Result<(), BdError> {
        if self.points.len() < MIN_POINTS {
            return Err(BdError::TooFewPoints(self.points.len()));
        }
        let mut qps = BTreeSet::new();
        for p in &self.points {
            p.validate()?;
            if !qps.insert(p.qp) {
                return Err(BdError::DuplicateQp(p.qp));
            }
        }
        prepare(&self.pairs(CostAxis::Rate, QualityAxis::Psnr).expect("rate and PSNR always present"))?;
        Ok(())
    }

    /// `(cost, quality)` pairs, or `None` if any point lacks either value.
    pub fn pairs(&self, cost: CostAxis, quality: QualityAxis) -> Option<Vec<(f64, f64)>> {
        self.points
            .iter()
            .map(|p| Some((p.cost(cost)?, p.quality(quality)?)))
            .collect()
    }

    pub fn has(&self, cost: CostAxis, quality: QualityAxis) -> bool {
        self.pairs(cost, quality).is_some()
    }
}

/// A single BD value and the quality interval it was integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdValue {
    pub percent: f64,
    pub overlap: (f64, f64),
}

/// Sorts by cost, checks monotonicity, returns `(quality, log10 cost)` columns.
fn prepare(points: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>), BdError> {
    if points.len() < MIN_POINTS {
        return Err(BdError::TooFewPoints(points.len()));
    }
    let mut sorted = points.to_vec();
    for &(c, q) in &sorted {
        if !(c.is_finite() && q.is_finite()) {
            return Err(BdError::NonFinite);
        }
        if c <= 0.0 {
            return Err(BdError::NonPositiveCost(c));
        }
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
            return Err(BdError::NonMonotone(format!(
                "({}, {}) followed by ({}, {})",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    Ok(sorted.iter().map(|&(c, q)| (q, c.log10())).unzip())
}

/// BD difference of `test` against `reference`, both given as
/// `(cost, quality)` pairs.
pub fn bd_delta(
    reference: &[(f64, f64)],
    test: &[(f64, f64)],
    method: InterpolationMethod,
) -> Result<BdValue, BdError> {
    let (rq, rl) = prepare(reference).map_err(|e| e.in_curve("reference"))?;
    let (tq, tl) = prepare(test).map_err(|e| e.in_curve("test"))?;
    let (ref_lo, ref_hi) = (rq[0], rq[rq.len() - 1]);
    let (test_lo, test_hi) = (tq[0], tq[tq.len() - 1]);
    let lo = ref_lo.max(test_lo);
    let hi = ref_hi.min(test_hi);
    if !(lo < hi) {
        return Err(BdError::EmptyOverlap {
            ref_lo,
            ref_hi,
            test_lo,
            test_hi,
        });
    }
    let fr = Interpolant::fit(&rq, &rl, method).map_err(|e| e.in_curve("reference"))?;
    let ft = Interpolant::fit(&tq, &tl, method).map_err(|e| e.in_curve("test"))?;
    let mean = (ft.integrate(lo, hi) - fr.integrate(lo, hi)) / (hi - lo);
    let percent = (10f64.powf(mean) - 1.0) * 100.0;
    if !percent.is_finite() {
        return Err(BdError::NonFinite);
    }
    Ok(BdValue {
        percent,
        overlap: (lo, hi),
    })
}

/// BD difference of two curves along one cost and one quality axis.
pub fn bd_axis(
    reference: &RdCurve,
    test: &RdCurve,
    cost: CostAxis,
    quality: QualityAxis,
    method: InterpolationMethod,
) -> Result<BdValue, BdError> {
    let missing = |c: &RdCurve| BdError::MissingAxis {
        curve: c.profile_id.clone(),
        axis: format!("{cost}/{quality}"),
    };
    let r = reference.pairs(cost, quality).ok_or_else(|| missing(reference))?;
    let t = test.pairs(cost, quality).ok_or_else(|| missing(test))?;
    bd_delta(&r, &t, method).map_err(|e| match e {
        BdError::InCurve { curve, source } if curve == "reference" => source.in_curve(&reference.profile_id),
        BdError::InCurve { curve, source } if curve == "test" => source.in_curve(&test.profile_id),
        e => e,
    })
}

/// The four BD deltas of a test curve against a reference curve. A delta is
/// `None` when either curve lacks the cost or quality values it needs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BdResult {
    pub bdr_psnr: Option<BdValue>,
    pub bdde_psnr: Option<BdValue>,
    pub bdr_vmaf: Option<BdValue>,
    pub bdde_vmaf: Option<BdValue>,
}

impl BdResult {
    pub fn summary(&self) -> BdSummary {
        BdSummary {
            bdr_psnr: self.bdr_psnr.map(|v| v.percent),
            bdde_psnr: self.bdde_psnr.map(|v| v.percent),
            bdr_vmaf: self.bdr_vmaf.map(|v| v.percent),
            bdde_vmaf: self.bdde_vmaf.map(|v| v.percent),
        }
    }
}

/// Computes every BD delta the two curves support.
pub fn bd_result(reference: &RdCurve, test: &RdCurve, method: InterpolationMethod) -> Result<BdResult, BdError> {
    let mut out = BdResult::default();
    let slots = [
        (CostAxis::Rate, QualityAxis::Psnr),
        (CostAxis::Energy, QualityAxis::Psnr),
        (CostAxis::Rate, QualityAxis::Vmaf),
        (CostAxis::Energy, QualityAxis::Vmaf),
    ];
    for (cost, quality) in slots {
        if !(reference.has(cost, quality) && test.has(cost, quality)) {
            continue;
        }
        let v = bd_axis(reference, test, cost, quality, method)?;
        let slot = match (cost, quality) {
            (CostAxis::Rate, QualityAxis::Psnr) => &mut out.bdr_psnr,
            (CostAxis::Energy, QualityAxis::Psnr) => &mut out.bdde_psnr,
            (CostAxis::Rate, QualityAxis::Vmaf) => &mut out.bdr_vmaf,
            _ => &mut out.bdde_vmaf,
        };
        *slot = Some(v);
    }
    Ok(out)
}

/// BD percentages without overlap detail, e.g. a mean over sequences.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BdSummary {
    pub bdr_psnr: Option<f64>,
    pub bdde_psnr: Option<f64>,
    pub bdr_vmaf: Option<f64>,
    pub bdde_vmaf: Option<f64>,
}

impl BdSummary {
    pub fn get(&self, cost: CostAxis, quality: QualityAxis) -> Option<f64> {
        match (cost, quality) {
            (CostAxis::Rate, QualityAxis::Psnr) => self.bdr_psnr,
            (CostAxis::Energy, QualityAxis::Psnr) => self.bdde_psnr,
            (CostAxis::Rate, QualityAxis::Vmaf) => self.bdr_vmaf,
            (CostAxis::Energy, QualityAxis::Vmaf) => self.bdde_vmaf,
            (CostAxis::Time, _) => None,
        }
    }

    /// Arithmetic mean of each metric; a metric is `None` unless every input has it.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a BdSummary>) -> Option<BdSummary> {
        let items: Vec<&BdSummary> = items.into_iter().collect();
        if items.is_empty() {
            return None;
        }
        let avg = |f: fn(&BdSummary) -> Option<f64>| -> Option<f64> {
            let vals: Option<Vec<f64>> = items.iter().map(|s| f(s)).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(BdSummary {
            bdr_psnr: avg(|s| s.bdr_psnr),
            bdde_psnr: avg(|s| s.bdde_psnr),
            bdr_vmaf: avg(|s| s.bdr_vmaf),
            bdde_vmaf: avg(|s| s.bdde_vmaf),
        })
    }
}

/// Per-class and whole-set means of per-sequence BD results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdAggregate {
    pub classes: BTreeMap<String, ClassMean>,
    pub set: ClassMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub sequences: usize,
    pub mean: BdSummary,
}

/// Averages per-sequence results within each class, and over all sequences
/// for the set row. The set row weights every sequence equally, so classes
/// with more sequences weigh more.
pub fn aggregate_bd<'a>(per_sequence: impl IntoIterator<Item = (&'a str, BdSummary)>) -> Result<BdAggregate, BdError> {
    let mut groups: BTreeMap<String, Vec<BdSummary>> = BTreeMap::new();
    let mut all = Vec::new();
    for (class, result) in per_sequence {
        groups.entry(class.to_string()).or_default().push(result);
        all.push(result);
    }
    let set = BdSummary::mean(&all).ok_or_else(|| BdError::EmptyGroup("set".into()))?;
    let classes = groups
        .into_iter()
        .map(|(class, items)| {
            let mean = BdSummary::mean(&items).ok_or_else(|| BdError::EmptyGroup(class.clone()))?;
            Ok((class, ClassMean { sequences: items.len(), mean }))
        })
        .collect::<Result<_, BdError>>()?;
    Ok(BdAggregate {
        classes,
        set: ClassMean { sequences: all.len(), mean: set },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curve(id: &str, pts: &[(f64, f64)]) -> RdCurve {
        let points = pts
            .iter()
            .enumerate()
            .map(|(i, &(rate, q))| RdPoint {
                qp: 37 - 5 * i as i32,
                rate_kbps: rate,
                psnr_y: q,
                psnr_u: q,
                psnr_v: q,
                vmaf: None,
                energy_j: Some(rate * 3.0),
                time_s: None,
            })
            .collect();
        RdCurve::new(id, "seq", points).unwrap()
    }

    #[test]
    fn psnr_yuv_weights() {
        assert_eq!(psnr_yuv(40.0, 40.0, 40.0).unwrap(), 40.0);
        assert_eq!(psnr_yuv(42.0, 34.0, 34.0).unwrap(), 40.0);
        assert_eq!(psnr_yuv(38.0, 46.0, 46.0).unwrap(), 40.0);
        assert_eq!(psnr_yuv(f64::NAN, 1.0, 1.0), Err(BdError::NonFinite));
        assert_eq!(psnr_yuv(1.0, f64::INFINITY, 1.0), Err(BdError::NonFinite));
    }

    const REF: [(f64, f64); 4] = [(1000.0, 34.0), (1800.0, 36.5), (3500.0, 39.0), (7000.0, 41.2)];

    #[test]
    fn identical_curves_give_zero() {
        for m in [InterpolationMethod::Pchip, InterpolationMethod::Poly] {
            let v = bd_delta(&REF, &REF, m).unwrap();
            assert_eq!(v.percent, 0.0);
            assert_eq!(v.overlap, (34.0, 41.2));
        }
    }

    #[test]
    fn doubled_cost_is_plus_hundred() {
        let doubled: Vec<_> = REF.iter().map(|&(c, q)| (2.0 * c, q)).collect();
        for m in [InterpolationMethod::Pchip, InterpolationMethod::Poly] {
            let v = bd_delta(&REF, &doubled, m).unwrap();
            assert_relative_eq!(v.percent, 100.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn error_paths() {
        let m = InterpolationMethod::default();
        assert!(matches!(
            bd_delta(&REF[..3], &REF, m),
            Err(BdError::InCurve { ref curve, ref source }) if curve == "reference" && **source == BdError::TooFewPoints(3)
        ));
        let shifted: Vec<_> = REF.iter().map(|&(c, q)| (c, q + 20.0)).collect();
        assert!(matches!(bd_delta(&REF, &shifted, m), Err(BdError::EmptyOverlap { .. })));
        let bent = [(1000.0, 34.0), (1800.0, 36.5), (3500.0, 36.0), (7000.0, 41.2)];
        assert!(matches!(
            bd_delta(&REF, &bent, m),
            Err(BdError::InCurve { ref curve, .. }) if curve == "test"
        ));
        let neg = [(-1.0, 34.0), (1800.0, 36.5), (3500.0, 39.0), (7000.0, 41.2)];
        assert!(bd_delta(&neg, &REF, m).is_err());
    }

    #[test]
    fn curve_construction_checks() {
        let mut pts = curve("a", &REF).points;
        pts[1].qp = pts[0].qp;
        assert!(matches!(
            RdCurve::new("a", "s", pts),
            Err(BdError::InCurve { source, .. }) if matches!(*source, BdError::DuplicateQp(_))
        ));
        let mut pts = curve("a", &REF).points;
        pts[2].vmaf = Some(120.0);
        assert!(RdCurve::new("a", "s", pts).is_err());
    }

    #[test]
    fn bd_result_fills_available_axes() {
        let a = curve("a", &REF);
        let r = bd_result(&a, &a, InterpolationMethod::Pchip).unwrap();
        assert_eq!(r.bdr_psnr.unwrap().percent, 0.0);
        assert_eq!(r.bdde_psnr.unwrap().percent, 0.0);
        assert!(r.bdr_vmaf.is_none() && r.bdde_vmaf.is_none());
    }

    #[test]
    fn overlap_error_names_axis_curves() {
        let a = curve("a", &REF);
        let mut b = curve("b", &REF);
        b.points.iter_mut().for_each(|p| p.energy_j = None);
        let err = bd_axis(&a, &b, CostAxis::Energy, QualityAxis::Psnr, InterpolationMethod::Pchip).unwrap_err();
        assert!(err.to_string().contains("`b`"));
    }

    #[test]
    fn aggregation_means() {
        let s = |bdde: f64| BdSummary {
            bdde_psnr: Some(bdde),
            ..Default::default()
        };
        let one = aggregate_bd([("C", s(-12.0))]).unwrap();
        assert_eq!(one.set.mean.bdde_psnr, Some(-12.0));
        let two = aggregate_bd([("C", s(-10.0)), ("C", s(-20.0))]).unwrap();
        assert_eq!(two.set.mean.bdde_psnr, Some(-15.0));
        assert_eq!(two.set.mean.bdr_psnr, None);
        assert!(matches!(aggregate_bd([]), Err(BdError::EmptyGroup(_))));
    }
}
