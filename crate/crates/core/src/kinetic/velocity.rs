use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, KacError, Result};

/// Allowed deviation of a scattering direction from unit length.
pub const SIGMA_TOLERANCE: f64 = 1e-12;

/// A point of velocity space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Velocity(pub Vec<f64>);

impl Velocity {
    #[must_use]
    pub fn new(components: Vec<f64>) -> Self {
        Self(components)
    }

    #[must_use]
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Unit vector along coordinate `axis`.
    #[must_use]
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[must_use]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[must_use]
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }

    #[must_use]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl From<Vec<f64>> for Velocity {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for Velocity {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
#[must_use]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
#[must_use]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean distance.
#[inline]
#[must_use]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Post-collision velocities written into `out_v`, `out_w`.
///
/// `v' = (v + w + |v - w| sigma) / 2`, `w' = (v + w - |v - w| sigma) / 2`.
/// No validation; see [`collide`].
#[inline]
pub fn collide_into(v: &[f64], w: &[f64], sigma: &[f64], out_v: &mut [f64], out_w: &mut [f64]) {
    let r = dist(v, w);
    for k in 0..v.len() {
        let mid = 0.5 * (v[k] + w[k]);
        let half = 0.5 * r * sigma[k];
        out_v[k] = mid + half;
        out_w[k] = mid - half;
    }
}

/// Binary collision with scattering direction `sigma`.
///
/// # Errors
///
/// Dimension mismatch, or `sigma` not of unit length.
pub fn collide(v: &Velocity, w: &Velocity, sigma: &Velocity) -> Result<(Velocity, Velocity)> {
    let d = v.dim();
    check_dim(d, w.dim())?;
    check_dim(d, sigma.dim())?;
    let norm = sigma.norm();
    if !((norm - 1.0).abs() <= SIGMA_TOLERANCE) {
        return Err(KacError::NonUnitSigma { norm });
    }
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    collide_into(&v.0, &w.0, &sigma.0, &mut a, &mut b);
    Ok((Velocity(a), Velocity(b)))
}

/// Fills `out` with a uniform point of the unit sphere.
pub fn sample_sigma_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = norm_sq(out).sqrt();
        if n > 1e-150 {
            for x in out.iter_mut() {
                *x /= n;
            }
            return;
        }
    }
}

/// Uniform point of the unit sphere in dimension `dim >= 2`.
///
/// # Errors
///
/// `dim < 2`.
pub fn sample_sigma<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Velocity> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    let mut out = vec![0.0; dim];
    sample_sigma_into(rng, &mut out);
    Ok(Velocity(out))
}
