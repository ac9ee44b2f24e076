use crate::error::{KacError, Result};
use crate::kinetic::norm_sq;
use crate::measure::WeightedPointCloud;

/// Moment weight `(1 + |v|^2)^(k/2)`.
#[inline]
#[must_use]
pub fn moment_weight(v: &[f64], k: f64) -> f64 {
    let s = 1.0 + norm_sq(v);
    if k == 2.0 {
        s
    } else if k == 4.0 {
        s * s
    } else {
        s.powf(0.5 * k)
    }
}

/// `<(1 + |v|^2)^(k/2), mu>` for a nonnegative cloud.
///
/// # Errors
///
/// Negative weights.
pub fn lambda_k(mu: &WeightedPointCloud, k: f64) -> Result<f64> {
    if !mu.is_nonnegative() {
        return Err(KacError::SignedMeasure);
    }
    Ok(mu.integrate(|v| moment_weight(v, k)))
}

/// Divides each weight by `1 + |x|^2`.
#[must_use]
pub fn reweight(mu: &WeightedPointCloud) -> WeightedPointCloud {
    mu.reweighted(|x| 1.0 / (1.0 + norm_sq(x)))
}

/// Both sides of the moment correlation inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationCheck {
    pub product: f64,
    pub combined: f64,
    pub holds: bool,
}

/// Checks `Lambda_{k1} * Lambda_{k2} <= Lambda_{k1 + k2}` for a probability
/// cloud, with relative slack `1e-12`.
///
/// # Errors
///
/// `k1` or `k2` below 2, or a signed cloud.
pub fn correlation_check(mu: &WeightedPointCloud, k1: f64, k2: f64) -> Result<CorrelationCheck> {
    if k1 < 2.0 || k2 < 2.0 {
        return Err(KacError::InvalidArgument(format!("moment orders must be >= 2, got {k1}, {k2}")));
    }
    let product = lambda_k(mu, k1)? * lambda_k(mu, k2)?;
    let combined = lambda_k(mu, k1 + k2)?;
    let holds = product <= combined * (1.0 + 1e-12) + 1e-12;
    Ok(CorrelationCheck { product, combined, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn sphere_points(n: usize) -> WeightedPointCloud {
        let mut pts = Vec::new();
        for k in 0..n {
            let a = k as f64 * 2.0 * std::f64::consts::PI / n as f64;
            pts.extend_from_slice(&[a.cos(), a.sin(), 0.0]);
        }
        WeightedPointCloud::uniform(3, pts).unwrap()
    }

    #[test]
    fn trivial_values() {
        let d0 = WeightedPointCloud::dirac(&[0.0, 0.0, 0.0]);
        for k in [2.0, 3.0, 7.5] {
            assert_eq!(lambda_k(&d0, k).unwrap(), 1.0);
        }
        let s = sphere_points(12);
        assert!((lambda_k(&s, 2.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((lambda_k(&s, 4.0).unwrap() - 4.0).abs() < 1e-14);
        let c = correlation_check(&s, 2.0, 2.0).unwrap();
        assert!(c.holds && (c.product - c.combined).abs() < 1e-13);
        assert!(correlation_check(&d0, 2.0, 2.0).unwrap().holds);
    }

    #[test]
    fn reweight_examples() {
        let r = reweight(&WeightedPointCloud::dirac(&[1.0, 0.0, 0.0]));
        assert_eq!(r.weight(0), 0.5);
        let r = reweight(&WeightedPointCloud::dirac(&[0.0, 0.0]));
        assert_eq!(r.weight(0), 1.0);
    }

    #[test]
    fn signed_input_rejected() {
        let mu = WeightedPointCloud::new(1, vec![0.0, 1.0], vec![1.0, -0.5]).unwrap();
        assert!(matches!(lambda_k(&mu, 2.0), Err(KacError::SignedMeasure)));
        assert!(correlation_check(&WeightedPointCloud::dirac(&[0.0]), 1.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_correlated(seed in any::<u64>(), n in 1usize..30) {
            let mut rng = stream(seed, 0, 0);
            let pts: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let total: f64 = ws.iter().sum();
            let mu = WeightedPointCloud::new(3, pts, ws.iter().map(|w| w / total).collect()).unwrap();
            let ks = [2.0, 2.5, 3.0, 4.0, 6.0, 8.0];
            for w in ks.windows(2) {
                prop_assert!(lambda_k(&mu, w[0]).unwrap() <= lambda_k(&mu, w[1]).unwrap() * (1.0 + 1e-14));
            }
            for &a in &ks {
                for &b in &ks {
                    prop_assert!(correlation_check(&mu, a, b).unwrap().holds);
                }
            }
        }
    }
}
