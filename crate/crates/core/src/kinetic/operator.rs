//! The quadratic collision operator `Q(mu)` for finite clouds.
//!
//! For `mu = sum w_k delta_{x_k}` the pair integrals are finite sums and only
//! the scattering average over the sphere needs quadrature:
//!
//! `<f, Q(mu)> = sum_{i<j} 2 w_i w_j |x_i - x_j| ( avg_sigma [f(v') + f(v*')] - f(x_i) - f(x_j) )`.
//!
//! Each quadrature direction conserves mass, momentum and energy exactly, so
//! the output cloud does too (up to rounding) whatever the scheme.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{KacError, Result};
use crate::measure::WeightedPointCloud;
use crate::rng::{stream, tags};
use crate::stats::Estimate;

use super::velocity::{collide_into, dist, sample_sigma_into, Velocity};

/// Quadrature over scattering directions.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaScheme {
    /// `draws` directions per pair, arranged as `draws / 2` antithetic pairs
    /// `(sigma, -sigma)`. Must be even and positive.
    MonteCarlo { draws: usize },
    /// Fixed equally weighted directions shared by all pairs.
    Design(Vec<Velocity>),
}

impl SigmaScheme {
    /// The `2d` coordinate directions `+-e_k`.
    #[must_use]
    pub fn axes(dim: usize) -> Self {
        let mut v = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            v.push(Velocity::unit(dim, k));
            let mut m = Velocity::zeros(dim);
            m.0[k] = -1.0;
            v.push(m);
        }
        Self::Design(v)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::MonteCarlo { draws } => {
                if *draws == 0 || draws % 2 != 0 {
                    return Err(KacError::InvalidArgument(format!(
                        "antithetic sigma draws must be even and positive, got {draws}"
                    )));
                }
            }
            Self::Design(dirs) => {
                if dirs.is_empty() {
                    return Err(KacError::InvalidArgument("empty sigma design".into()));
                }
                for s in dirs {
                    crate::error::check_dim(dim, s.dim())?;
                    let n = s.norm();
                    if (n - 1.0).abs() > super::SIGMA_TOLERANCE {
                        return Err(KacError::NonUnitSigma { norm: n });
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_input(mu: &WeightedPointCloud, scheme: &SigmaScheme) -> Result<()> {
    if mu.dim() < 2 {
        return Err(KacError::DimensionTooSmall(mu.dim()));
    }
    if !mu.is_nonnegative() {
        return Err(KacError::SignedMeasure);
    }
    scheme.validate(mu.dim())
}

fn pair_list(mu: &WeightedPointCloud) -> Vec<(usize, usize)> {
    let n = mu.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Directions used for one pair: either the shared design or fresh
/// antithetic draws from the pair's own stream.
fn for_each_direction<F: FnMut(&[f64])>(scheme: &SigmaScheme, dim: usize, seed: u64, pair: u64, mut visit: F) {
    match scheme {
        SigmaScheme::Design(dirs) => dirs.iter().for_each(|s| visit(&s.0)),
        SigmaScheme::MonteCarlo { draws } => {
            let mut rng = stream(seed, pair, tags::SIGMA);
            let mut s = vec![0.0; dim];
            let mut neg = vec![0.0; dim];
            for _ in 0..draws / 2 {
                sample_sigma_into(&mut rng, &mut s);
                for (n, x) in neg.iter_mut().zip(&s) {
                    *n = -x;
                }
                visit(&s);
                visit(&neg);
            }
        }
    }
}

/// Materialises `Q(mu)` as a signed cloud.
///
/// The output has `O(pairs * directions)` atoms; use
/// [`collision_operator_integrate`] for large quadratures.
///
/// # Errors
///
/// Signed input, `d < 2`, or an invalid scheme.
pub fn collision_operator_apply<R: Rng + ?Sized>(
    mu: &WeightedPointCloud,
    scheme: &SigmaScheme,
    rng: &mut R,
) -> Result<WeightedPointCloud> {
    check_input(mu, scheme)?;
    let d = mu.dim();
    let seed = rng.next_u64();
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    for (p, (i, j)) in pair_list(mu).into_iter().enumerate() {
        let (x, y) = (mu.point(i), mu.point(j));
        let r = dist(x, y);
        if r == 0.0 {
            continue;
        }
        let c = 2.0 * mu.weight(i) * mu.weight(j) * r;
        let mut gain = Vec::new();
        for_each_direction(scheme, d, seed, p as u64, |s| {
            collide_into(x, y, s, &mut a, &mut b);
            gain.extend_from_slice(&a);
            gain.extend_from_slice(&b);
        });
        let m = gain.len() / (2 * d);
        pts.extend_from_slice(&gain);
        ws.extend(std::iter::repeat_n(c / m as f64, 2 * m));
        pts.extend_from_slice(x);
        pts.extend_from_slice(y);
        ws.push(-c);
        ws.push(-c);
    }
    if ws.is_empty() {
        return Ok(WeightedPointCloud::empty(d));
    }
    Ok(WeightedPointCloud::new(d, pts, ws)?.without_zero_atoms())
}

/// Estimates `<f, Q(mu)>` without materialising the output cloud.
///
/// The standard error reflects the direction quadrature only; it is zero for
/// a fixed design.
///
/// # Errors
///
/// As [`collision_operator_apply`].
pub fn collision_operator_integrate<R, F>(
    mu: &WeightedPointCloud,
    f: F,
    scheme: &SigmaScheme,
    rng: &mut R,
) -> Result<Estimate>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_input(mu, scheme)?;
    let d = mu.dim();
    let seed = rng.next_u64();
    let pairs = pair_list(mu);
    let antithetic = matches!(scheme, SigmaScheme::MonteCarlo { .. });
    let per_pair: Vec<(f64, f64)> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let (x, y) = (mu.point(i), mu.point(j));
            let r = dist(x, y);
            if r == 0.0 {
                return (0.0, 0.0);
            }
            let c = 2.0 * mu.weight(i) * mu.weight(j) * r;
            let mut a = vec![0.0; d];
            let mut b = vec![0.0; d];
            // Sample units: single directions for a design, antithetic
            // pairs for Monte Carlo.
            let mut units = Vec::new();
            let mut pending: Option<f64> = None;
            for_each_direction(scheme, d, seed, p as u64, |s| {
                collide_into(x, y, s, &mut a, &mut b);
                let g = f(&a) + f(&b);
                if antithetic {
                    match pending.take() {
                        None => pending = Some(g),
                        Some(h) => units.push(0.5 * (g + h)),
                    }
                } else {
                    units.push(g);
                }
            });
            let e = Estimate::from_samples(&units);
            let var = if antithetic && units.len() > 1 { (c * e.se).powi(2) } else { 0.0 };
            (c * (e.mean - f(x) - f(y)), var)
        })
        .collect();
    let mean = per_pair.iter().map(|p| p.0).sum();
    let var: f64 = per_pair.iter().map(|p| p.1).sum();
    Ok(Estimate { mean, se: var.sqrt(), samples: pairs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::norm_sq;
    use crate::rng::stream;

    fn two_point() -> WeightedPointCloud {
        WeightedPointCloud::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn conserves_mass_momentum_energy() {
        let mu = WeightedPointCloud::new(
            3,
            vec![1.0, 0.0, 0.0, -0.5, 0.3, 0.0, 0.0, -0.2, 1.5, 0.1, 0.1, 0.1],
            vec![0.1, 0.4, 0.3, 0.2],
        )
        .unwrap();
        let mut rng = stream(1, 0, 0);
        let q = collision_operator_apply(&mu, &SigmaScheme::MonteCarlo { draws: 64 }, &mut rng).unwrap();
        assert!(q.total_mass().abs() < 1e-14);
        assert!(q.momentum().iter().all(|p| p.abs() < 1e-14));
        assert!(q.integrate(norm_sq).abs() < 1e-13);
    }

    #[test]
    fn dirac_is_a_fixed_point() {
        let mu = WeightedPointCloud::dirac(&[0.4, -1.0, 2.0]);
        let mut rng = stream(2, 0, 0);
        let q = collision_operator_apply(&mu, &SigmaScheme::MonteCarlo { draws: 8 }, &mut rng).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn two_point_loss_term_is_exact() {
        // Pair weight 2 * 1/4 * 2 = 1 lost at each of +-e1; gains on the unit sphere.
        let mu = two_point();
        let mut rng = stream(3, 0, 0);
        let q = collision_operator_apply(&mu, &SigmaScheme::axes(3), &mut rng).unwrap();
        let at = |p: [f64; 3]| q.iter().filter(|(x, _)| *x == p).map(|(_, w)| w).sum::<f64>();
        // The design contains +-e1, which reproduce the inputs with weight 2/6 each.
        assert!((at([1.0, 0.0, 0.0]) - (-1.0 + 1.0 / 3.0)).abs() < 1e-15);
        assert!((at([0.0, 1.0, 0.0]) - 1.0 / 3.0).abs() < 1e-15);
        // Radial test functions see no change: every output atom has |v| = 1.
        for (x, _) in q.iter() {
            assert!((norm_sq(x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn integrate_agrees_with_apply_for_designs() {
        let mu = WeightedPointCloud::new(2, vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5], vec![0.2, 0.5, 0.3]).unwrap();
        let f = |v: &[f64]| v[0].powi(3) + v[1];
        let scheme = SigmaScheme::axes(2);
        let mut rng = stream(4, 0, 0);
        let q = collision_operator_apply(&mu, &scheme, &mut rng).unwrap();
        let e = collision_operator_integrate(&mu, f, &scheme, &mut rng).unwrap();
        assert!((q.integrate(f) - e.mean).abs() < 1e-13);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn rejects_signed_input_and_odd_draws() {
        let mu = WeightedPointCloud::new(2, vec![0.0, 0.0, 1.0, 0.0], vec![1.0, -0.5]).unwrap();
        let mut rng = stream(5, 0, 0);
        assert!(matches!(collision_operator_apply(&mu, &SigmaScheme::axes(2), &mut rng), Err(KacError::SignedMeasure)));
        assert!(collision_operator_apply(&two_point(), &SigmaScheme::MonteCarlo { draws: 3 }, &mut rng).is_err());
    }
}
