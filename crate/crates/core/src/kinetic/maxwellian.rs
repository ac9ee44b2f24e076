use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{KacError, Result};

use super::Velocity;

/// Centred isotropic Gaussian with per-coordinate variance `1/d`, so that
/// the mean energy per particle is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Maxwellian {
    dim: usize,
}

impl Maxwellian {
    /// # Errors
    ///
    /// `dim < 2`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(KacError::DimensionTooSmall(dim));
        }
        Ok(Self { dim })
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-coordinate variance.
    #[must_use]
    pub fn variance(&self) -> f64 {
        1.0 / self.dim as f64
    }

    /// Lebesgue density `exp(-d|v|^2/2) / (2 pi / d)^(d/2)`.
    #[must_use]
    pub fn density(&self, v: &[f64]) -> f64 {
        let d = self.dim as f64;
        let r2: f64 = v.iter().map(|x| x * x).sum();
        (-0.5 * d * r2).exp() / (2.0 * std::f64::consts::PI / d).powf(0.5 * d)
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let s = self.variance().sqrt();
        for x in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = s * z;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Velocity {
        let mut v = vec![0.0; self.dim];
        self.sample_into(rng, &mut v);
        Velocity(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn density_at_origin() {
        let m = Maxwellian::new(3).unwrap();
        let expected = (2.0 * std::f64::consts::PI / 3.0).powf(-1.5);
        assert!((m.density(&[0.0; 3]) - expected).abs() < 1e-15);
        assert!((m.variance() - 1.0 / 3.0).abs() < 1e-16);
        assert!(Maxwellian::new(1).is_err());
    }

    #[test]
    fn density_integrates_to_one_in_2d() {
        // Midpoint rule on [-6, 6]^2.
        let m = Maxwellian::new(2).unwrap();
        let n = 600;
        let h = 12.0 / n as f64;
        let mut total = 0.0;
        for a in 0..n {
            for b in 0..n {
                let x = -6.0 + (a as f64 + 0.5) * h;
                let y = -6.0 + (b as f64 + 0.5) * h;
                total += m.density(&[x, y]) * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn sample_energy_is_one() {
        let m = Maxwellian::new(3).unwrap();
        let mut rng = stream(11, 0, 0);
        let n = 50_000;
        let e: f64 = (0..n).map(|_| m.sample(&mut rng).norm_sq()).sum::<f64>() / n as f64;
        // Var |v|^2 = 2/3 for d = 3.
        assert!((e - 1.0).abs() < 5.0 * (2.0f64 / 3.0 / n as f64).sqrt());
    }
}
