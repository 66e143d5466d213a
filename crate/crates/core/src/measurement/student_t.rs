//! Student-t quantiles by inverting the regularized incomplete beta function.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::MeasureError;

/// Whether the critical value covers both tails or one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    /// Quantile at `1 - (1 - alpha) / 2`.
    #[default]
    TwoSided,
    /// Quantile at `alpha`.
    OneSided,
}

/// Upper tail probability `P(T > t)` for `t >= 0`.
fn upper_tail(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    0.5 * beta_reg(0.5 * df, 0.5, x)
}

/// Quantile of Student's t at cumulative probability `p` in `(0, 1)`.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must be in (0, 1)");
    assert!(df > 0.0, "degrees of freedom must be positive");
    if p == 0.5 {
        return 0.0;
    }
    let tail = if p > 0.5 { 1.0 - p } else { p };
    // Bracket, then bisect; the upper tail is strictly decreasing in t.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while upper_tail(hi, df) > tail {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if upper_tail(mid, df) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    if p > 0.5 {
        t
    } else {
        -t
    }
}

/// Critical t value for confidence `alpha` with `df` degrees of freedom.
pub fn t_critical(alpha: f64, df: u64, sidedness: Sidedness) -> Result<f64, MeasureError> {
    if df < 1 {
        return Err(MeasureError::DegreesOfFreedom);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MeasureError::InvalidParams(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let p = match sidedness {
        Sidedness::TwoSided => 1.0 - (1.0 - alpha) / 2.0,
        Sidedness::OneSided => alpha,
    };
    Ok(t_quantile(p, df as f64))
}
