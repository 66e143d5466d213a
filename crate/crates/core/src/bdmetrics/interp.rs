//! Interpolants of log-cost over quality with closed-form integrals.

use nalgebra::{DMatrix, DVector};

use super::BdError;

/// Interpolation used to turn four or more operating points into a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationMethod {
    /// Monotone piecewise cubic Hermite (Fritsch-Carlson slopes).
    #[default]
    Pchip,
    /// Least-squares cubic polynomial, the classic Bjontegaard fit.
    Poly,
}

impl std::str::FromStr for InterpolationMethod {
    type Err = BdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pchip" => Ok(InterpolationMethod::Pchip),
            "poly" | "polynomial" | "cubic" => Ok(InterpolationMethod::Poly),
            other => Err(BdError::UnknownMethod(other.to_string())),
        }
    }
}

impl std::fmt::Display for InterpolationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InterpolationMethod::Pchip => "pchip",
            InterpolationMethod::Poly => "poly",
        })
    }
}

/// A fitted curve `y(x)`; `x` strictly increasing.
#[derive(Debug, Clone)]
pub(crate) enum Interpolant {
    Poly {
        center: f64,
        scale: f64,
        /// Coefficients in the normalized variable, lowest degree first.
        coeffs: [f64; 4],
    },
    Pchip {
        x: Vec<f64>,
        y: Vec<f64>,
        slopes: Vec<f64>,
    },
}

impl Interpolant {
    pub(crate) fn fit(x: &[f64], y: &[f64], method: InterpolationMethod) -> Result<Self, BdError> {
        debug_assert_eq!(x.len(), y.len());
        match method {
            InterpolationMethod::Poly => fit_poly(x, y),
            InterpolationMethod::Pchip => Ok(fit_pchip(x, y)),
        }
    }

    /// Exact integral over `[lo, hi]`; the interval must lie inside the data range.
    pub(crate) fn integrate(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Interpolant::Poly { center, scale, coeffs } => {
                let anti = |t: f64| {
                    t * (coeffs[0] + t * (coeffs[1] / 2.0 + t * (coeffs[2] / 3.0 + t * coeffs[3] / 4.0)))
                };
                let a = (lo - center) / scale;
                let b = (hi - center) / scale;
                scale * (anti(b) - anti(a))
            }
            Interpolant::Pchip { x, y, slopes } => {
                let mut total = 0.0;
                for k in 0..x.len() - 1 {
                    let a = lo.max(x[k]);
                    let b = hi.min(x[k + 1]);
                    if b <= a {
                        continue;
                    }
                    let h = x[k + 1] - x[k];
                    let m = (y[k + 1] - y[k]) / h;
                    let c0 = y[k];
                    let c1 = slopes[k];
                    let c2 = (3.0 * m - 2.0 * slopes[k] - slopes[k + 1]) / h;
                    let c3 = (slopes[k] + slopes[k + 1] - 2.0 * m) / (h * h);
                    let anti = |s: f64| s * (c0 + s * (c1 / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
                    total += anti(b - x[k]) - anti(a - x[k]);
                }
                total
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn eval(&self, at: f64) -> f64 {
        match self {
            Interpolant::Poly { center, scale, coeffs } => {
                let t = (at - center) / scale;
                coeffs[0] + t * (coeffs[1] + t * (coeffs[2] + t * coeffs[3]))
            }
            Interpolant::Pchip { x, y, slopes } => {
                let k = x.partition_point(|v| *v <= at).clamp(1, x.len() - 1) - 1;
                let h = x[k + 1] - x[k];
                let m = (y[k + 1] - y[k]) / h;
                let s = at - x[k];
                let c2 = (3.0 * m - 2.0 * slopes[k] - slopes[k + 1]) / h;
                let c3 = (slopes[k] + slopes[k + 1] - 2.0 * m) / (h * h);
                y[k] + s * (slopes[k] + s * (c2 + s * c3))
            }
        }
    }
}

fn fit_poly(x: &[f64], y: &[f64]) -> Result<Interpolant, BdError> {
    let (min, max) = (x[0], x[x.len() - 1]);
    let center = 0.5 * (min + max);
    let scale = 0.5 * (max - min);
    let n = x.len();
    let design = DMatrix::from_fn(n, 4, |r, c| ((x[r] - center) / scale).powi(c as i32));
    let rhs = DVector::from_column_slice(y);
    let solution = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| BdError::Fit(e.to_string()))?;
    let coeffs = [solution[0], solution[1], solution[2], solution[3]];
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(BdError::Fit("non-finite polynomial coefficients".into()));
    }
    Ok(Interpolant::Poly { center, scale, coeffs })
}

fn fit_pchip(x: &[f64], y: &[f64]) -> Interpolant {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut slopes = vec![0.0; n];
    if n == 2 {
        slopes[0] = m[0];
        slopes[1] = m[0];
    } else {
        for k in 1..n - 1 {
            if m[k - 1] * m[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                slopes[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
            }
        }
        slopes[0] = edge_slope(h[0], h[1], m[0], m[1]);
        slopes[n - 1] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
    }
    Interpolant::Pchip {
        x: x.to_vec(),
        y: y.to_vec(),
        slopes,
    }
}

/// Three-point end slope, clipped to keep the end interval shape preserving.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}
