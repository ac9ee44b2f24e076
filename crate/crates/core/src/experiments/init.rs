use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kinetic::{norm_sq, project_flat_to_boltzmann_sphere, sample_sigma_into, Maxwellian, ParticleState};
use crate::measure::WeightedPointCloud;

/// One-particle law used to draw chaotic initial data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    /// Centred Gaussian with unit mean energy.
    Maxwellian,
    /// Uniform direction with radius `R`, `P(R > r) = (1 + r)^(-tail_index)`.
    /// Moments `Lambda_p` are finite exactly for `p < tail_index`.
    ParetoRadial { tail_index: f64 },
}

impl InitialLaw {
    /// Fills `out` with one draw.
    ///
    /// # Panics
    ///
    /// `out.len() < 2` for the Maxwellian.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            Self::Maxwellian => Maxwellian::new(out.len()).expect("dimension >= 2").sample_into(rng, out),
            Self::ParetoRadial { tail_index } => {
                sample_sigma_into(rng, out);
                let u: f64 = 1.0 - rng.random::<f64>();
                let r = u.powf(-1.0 / tail_index) - 1.0;
                for x in out.iter_mut() {
                    *x *= r;
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::ParetoRadial { tail_index } if !(tail_index > 2.0) => Err(KacError::InvalidArgument(format!(
                "Pareto tail index must exceed 2 for finite energy, got {tail_index}"
            ))),
            _ => Ok(()),
        }
    }
}

/// `n` i.i.d. draws, row-major.
///
/// # Errors
///
/// `dim < 2` or an invalid law.
pub fn sample_iid<R: Rng + ?Sized>(law: &InitialLaw, n: usize, dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    law.validate()?;
    let mut data = vec![0.0; n * dim];
    for v in data.chunks_exact_mut(dim) {
        law.sample_into(rng, v);
    }
    Ok(data)
}

/// I.i.d. sample from `law`, centred and rescaled onto the Boltzmann sphere.
///
/// # Errors
///
/// `n < 2`, `dim < 2`, or a degenerate sample.
pub fn chaotic_init<R: Rng + ?Sized>(law: &InitialLaw, n: usize, dim: usize, rng: &mut R) -> Result<ParticleState> {
    project_flat_to_boltzmann_sphere(dim, sample_iid(law, n, dim, rng)?)
}

/// Non-chaotic data: a uniform unit vector `Sigma` and its `2^d` coordinate
/// reflections, each carried by `n / 2^d` particles, in random order.
///
/// # Errors
///
/// `dim < 2`, or `n` not a positive multiple of `2^d`.
pub fn nonchaotic_init<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<ParticleState> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    let patterns = 1usize.checked_shl(dim as u32).filter(|p| *p <= n && n.is_multiple_of(*p)).ok_or_else(|| {
        KacError::InvalidArgument(format!("particle count {n} is not a positive multiple of 2^{dim}"))
    })?;
    let mut sigma = vec![0.0; dim];
    sample_sigma_into(rng, &mut sigma);
    let mut labels: Vec<usize> = (0..n).map(|k| k % patterns).collect();
    labels.shuffle(rng);
    let mut data = Vec::with_capacity(n * dim);
    for p in labels {
        for (k, s) in sigma.iter().enumerate() {
            data.push(if p >> k & 1 == 1 { -s } else { *s });
        }
    }
    ParticleState::from_flat(dim, data)
}

/// Exact draw from the uniform law on the Boltzmann sphere: a standard
/// Gaussian vector in `(R^d)^N`, centred and rescaled to energy `N`.
///
/// # Errors
///
/// `n < 2` or `dim < 2`.
pub fn equilibrium_sample<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<ParticleState> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    let data: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    project_flat_to_boltzmann_sphere(dim, data)
}

/// Equal-weight discretisation of the uniform law on the unit sphere:
/// a Fibonacci lattice for `dim == 3`, uniform draws otherwise.
///
/// # Errors
///
/// `dim < 2` or `m == 0`.
pub fn sphere_design<R: Rng + ?Sized>(dim: usize, m: usize, rng: &mut R) -> Result<WeightedPointCloud> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    if m == 0 {
        return Err(KacError::EmptyMeasure);
    }
    let mut pts = Vec::with_capacity(m * dim);
    if dim == 3 {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for k in 0..m {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            pts.extend_from_slice(&[r * phi.cos(), r * phi.sin(), z]);
        }
    } else {
        let mut v = vec![0.0; dim];
        for _ in 0..m {
            sample_sigma_into(rng, &mut v);
            pts.extend_from_slice(&v);
        }
    }
    WeightedPointCloud::uniform(dim, pts)
}

/// Test function `(1 + |v|^2) min(|v| / sqrt(N / 2), 1)` whose mean exceeds
/// 1 only when the energy concentrates on few particles.
pub fn concentration_function(n: usize) -> impl Fn(&[f64]) -> f64 + Send + Sync + Clone {
    let scale = (n as f64 / 2.0).sqrt().recip();
    move |v: &[f64]| {
        let r2 = norm_sq(v);
        (1.0 + r2) * (r2.sqrt() * scale).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::SPHERE_TOLERANCE;
    use crate::rng::stream;
    use crate::stats::Estimate;

    #[test]
    fn chaotic_states_lie_on_sphere() {
        let mut rng = stream(1, 0, 0);
        for law in [InitialLaw::Maxwellian, InitialLaw::ParetoRadial { tail_index: 3.0 }] {
            for n in [2, 3, 17, 256] {
                let s = chaotic_init(&law, n, 3, &mut rng).unwrap();
                assert!(s.is_on_sphere(1e-12), "{law:?} {n}");
            }
        }
        assert!(chaotic_init(&InitialLaw::ParetoRadial { tail_index: 1.5 }, 4, 3, &mut rng).is_err());
    }

    #[test]
    fn two_particle_chaotic_state_is_unit_pair() {
        let mut rng = stream(2, 0, 0);
        let raw = sample_iid(&InitialLaw::Maxwellian, 2, 3, &mut stream(2, 0, 0)).unwrap();
        let s = chaotic_init(&InitialLaw::Maxwellian, 2, 3, &mut rng).unwrap();
        let diff: Vec<f64> = (0..3).map(|k| raw[k] - raw[3 + k]).collect();
        let len = norm_sq(&diff).sqrt();
        for k in 0..3 {
            assert!((s.velocity(0)[k] - diff[k] / len).abs() < 1e-12);
            assert!((s.velocity(1)[k] + diff[k] / len).abs() < 1e-12);
        }
    }

    #[test]
    fn pareto_tail_matches_law() {
        let mut rng = stream(3, 0, 0);
        let data = sample_iid(&InitialLaw::ParetoRadial { tail_index: 3.0 }, 200_000, 3, &mut rng).unwrap();
        let exceed = data.chunks_exact(3).filter(|v| norm_sq(v).sqrt() > 1.0).count() as f64 / 200_000.0;
        let p = 0.125;
        assert!((exceed - p).abs() < 4.0 * (p * (1.0 - p) / 200_000.0f64).sqrt());
    }

    #[test]
    fn nonchaotic_structure() {
        let mut rng = stream(4, 0, 0);
        let s = nonchaotic_init(8, 3, &mut rng).unwrap();
        let mut rows: Vec<Vec<u64>> = s.velocities().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 8);
        for n in [8, 64, 512] {
            let s = nonchaotic_init(n, 3, &mut rng).unwrap();
            assert!(norm_sq(s.momentum()).sqrt() < 1e-12 * n as f64);
            assert!(s.velocities().all(|v| (norm_sq(v) - 1.0).abs() < 1e-14));
        }
        assert!(nonchaotic_init(12, 3, &mut rng).is_err());
        assert!(nonchaotic_init(4, 3, &mut rng).is_err());
    }

    #[test]
    fn equilibrium_coordinate_variance() {
        let mut rng = stream(5, 0, 0);
        let mut xs = Vec::new();
        for _ in 0..4000 {
            let s = equilibrium_sample(256, 3, &mut rng).unwrap();
            assert!(s.is_on_sphere(SPHERE_TOLERANCE));
            xs.push(s.velocity(0)[0]);
        }
        let m = Estimate::from_samples(&xs);
        assert!(m.mean.abs() < 3.0 * m.se);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let v = Estimate::from_samples(&sq);
        assert!((v.mean - 1.0 / 3.0).abs() < 3.0 * v.se, "{v:?}");
    }

    #[test]
    fn fibonacci_design_is_balanced() {
        let c = sphere_design(3, 2000, &mut stream(6, 0, 0)).unwrap();
        assert!(c.iter().all(|(x, _)| (norm_sq(x) - 1.0).abs() < 1e-12));
        let m = c.momentum();
        assert!(norm_sq(&m).sqrt() < 1e-3);
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concentration_function_values() {
        let n = 6;
        let f = concentration_function(n);
        let r = (n as f64 / 2.0).sqrt();
        let mut v = vec![0.0; 3 * n];
        v[0] = r;
        v[3] = -r;
        let mean: f64 = v.chunks_exact(3).map(&f).sum::<f64>() / n as f64;
        assert!((mean - (1.0 + 2.0 / n as f64)).abs() < 1e-12);
        assert!(mean > 1.0);
        let lip = 2.0 / n as f64;
        assert!((f(&[0.1, 0.0, 0.0]) / 1.01 - 0.1 * lip.sqrt()).abs() < 1e-12);
    }
}
