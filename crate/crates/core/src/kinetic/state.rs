use serde::{Deserialize, Serialize};

use crate::error::{check_dim, KacError, Result};

use super::velocity::{dist, norm_sq, Velocity};

/// Velocities of `N` particles stored row-major in one buffer.
///
/// The momentum and energy caches are refreshed on construction and by
/// [`ParticleState::refresh`]; in-place mutation through
/// [`ParticleState::velocity_mut`] leaves them stale until then.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    dim: usize,
    data: Vec<f64>,
    momentum: Vec<f64>,
    energy: f64,
}

/// Tolerance on `|sum v_i| / sqrt(N)` and `|sum |v_i|^2 - N| / N` for
/// membership of the Boltzmann sphere.
pub const SPHERE_TOLERANCE: f64 = 1e-9;

impl ParticleState {
    /// # Errors
    ///
    /// `dim < 2`, fewer than two particles, or a buffer length that is not a
    /// multiple of `dim`.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(KacError::DimensionTooSmall(dim));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(KacError::InvalidArgument(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.len() / dim < 2 {
            return Err(KacError::TooFewParticles { min: 2, found: data.len() / dim });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(KacError::InvalidArgument("non-finite velocity component".into()));
        }
        let mut s = Self { dim, data, momentum: vec![0.0; dim], energy: 0.0 };
        s.refresh();
        Ok(s)
    }

    /// # Errors
    ///
    /// As [`ParticleState::from_flat`], plus mixed dimensions.
    pub fn from_velocities(vs: &[Velocity]) -> Result<Self> {
        let dim = vs.first().map_or(0, Velocity::dim);
        let mut data = Vec::with_capacity(vs.len() * dim);
        for v in vs {
            check_dim(dim, v.dim())?;
            data.extend_from_slice(&v.0);
        }
        Self::from_flat(dim, data)
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[must_use]
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    #[must_use]
    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    #[must_use]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn velocity_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mutable access to two distinct particles.
    #[inline]
    pub fn pair_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        assert_ne!(i, j);
        let d = self.dim;
        if i < j {
            let (a, b) = self.data.split_at_mut(j * d);
            (&mut a[i * d..(i + 1) * d], &mut b[..d])
        } else {
            let (a, b) = self.data.split_at_mut(i * d);
            (&mut b[..d], &mut a[j * d..(j + 1) * d])
        }
    }

    pub fn velocities(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    #[must_use]
    pub fn to_velocities(&self) -> Vec<Velocity> {
        self.velocities().map(|v| Velocity(v.to_vec())).collect()
    }

    /// Recomputes the momentum and energy caches.
    pub fn refresh(&mut self) {
        let mut p = vec![0.0; self.dim];
        let mut e = 0.0;
        for v in self.data.chunks_exact(self.dim) {
            for (pk, vk) in p.iter_mut().zip(v) {
                *pk += vk;
            }
            e += norm_sq(v);
        }
        self.momentum = p;
        self.energy = e;
    }

    /// Cached total momentum `sum v_i`.
    #[must_use]
    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    /// Cached total energy `sum |v_i|^2`.
    #[must_use]
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Whether the state lies on the Boltzmann sphere: zero momentum and
    /// energy `N`, within `tol` (scaled as in [`SPHERE_TOLERANCE`]).
    #[must_use]
    pub fn is_on_sphere(&self, tol: f64) -> bool {
        let n = self.len() as f64;
        let p = norm_sq(&self.momentum).sqrt();
        p <= tol * n.sqrt() && (self.energy - n).abs() <= tol * n
    }

    /// Integral of `f` against the empirical measure.
    pub fn empirical_mean<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.velocities().map(f).sum::<f64>() / self.len() as f64
    }

    /// Sum of pairwise speeds `sum_{i<j} |v_i - v_j|`, O(N^2).
    #[must_use]
    pub fn pairwise_speed_sum(&self) -> f64 {
        let n = self.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += dist(self.velocity(i), self.velocity(j));
            }
        }
        s
    }
}

/// Centres and rescales a flat buffer onto the Boltzmann sphere.
///
/// # Errors
///
/// Fewer than two particles, `dim < 2`, or zero spread.
pub fn project_flat_to_boltzmann_sphere(dim: usize, mut data: Vec<f64>) -> Result<ParticleState> {
    if dim < 2 {
        return Err(KacError::DimensionTooSmall(dim));
    }
    let n = data.len() / dim;
    if n < 2 {
        return Err(KacError::TooFewParticles { min: 2, found: n });
    }
    // Two passes: the second removes the rounding left by the first.
    for _ in 0..2 {
        let mut mean = vec![0.0; dim];
        for v in data.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut spread = 0.0;
        for v in data.chunks_exact_mut(dim) {
            for (x, m) in v.iter_mut().zip(&mean) {
                *x -= m;
            }
            spread += norm_sq(v);
        }
        spread /= n as f64;
        if !(spread > 0.0) || !spread.is_finite() {
            return Err(KacError::DegenerateSample);
        }
        let scale = spread.sqrt().recip();
        for x in &mut data {
            *x *= scale;
        }
    }
    ParticleState::from_flat(dim, data)
}

/// Centres and rescales raw velocities onto the Boltzmann sphere.
///
/// # Errors
///
/// See [`project_flat_to_boltzmann_sphere`].
pub fn project_to_boltzmann_sphere(raw: &[Velocity]) -> Result<ParticleState> {
    let dim = raw.first().map_or(0, Velocity::dim);
    let mut data = Vec::with_capacity(raw.len() * dim);
    for v in raw {
        check_dim(dim, v.dim())?;
        data.extend_from_slice(&v.0);
    }
    project_flat_to_boltzmann_sphere(dim, data)
}
