//! Small statistical helpers shared by the estimators and studies.

use serde::{Deserialize, Serialize};

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

impl Estimate {
    /// Sample mean and standard error of the mean.
    #[must_use]
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, se: f64::NAN, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self { mean, se, samples: n }
    }

    /// Standard error of the difference of two independent estimates.
    #[must_use]
    pub fn combined_se(&self, other: &Self) -> f64 {
        self.se.hypot(other.se)
    }

    /// Number of combined standard errors separating two estimates.
    #[must_use]
    pub fn z_score(&self, other: &Self) -> f64 {
        let se = self.combined_se(other);
        if se == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / se
        }
    }
}

/// Result of a straight-line fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl LineFit {
    /// Approximate 95% interval for the slope.
    #[must_use]
    pub fn slope_interval(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_se, self.slope + 1.96 * self.slope_se)
    }
}

/// Weighted least squares with weights `1 / sigma_i^2`.
///
/// The slope error is the model-based one, inflated by the reduced chi-square
/// when the scatter exceeds the stated errors.
#[must_use]
pub fn weighted_line_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> LineFit {
    assert!(x.len() == y.len() && y.len() == sigma.len() && x.len() >= 2);
    let w: Vec<f64> = sigma.iter().map(|s| if *s > 0.0 && s.is_finite() { 1.0 / (s * s) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let xm = sx / sw;
    let ym = sy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (y - intercept - slope * x).powi(2)).sum();
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let scale = (chi2 / dof).max(1.0);
    LineFit { slope, intercept, slope_se: (scale / sxx).sqrt() }
}

/// Ordinary least squares fit.
#[must_use]
pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let ones = vec![1.0; x.len()];
    let fit = weighted_line_fit(x, y, &ones);
    // Residual-based error for unweighted data.
    let n = x.len() as f64;
    let xm = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - fit.intercept - fit.slope * a).powi(2)).sum();
    let dof = (n - 2.0).max(1.0);
    LineFit { slope_se: (rss / dof / sxx).sqrt(), ..fit }
}

/// Empirical quantile (type 7, linear interpolation). Sorts a copy.
#[must_use]
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}
