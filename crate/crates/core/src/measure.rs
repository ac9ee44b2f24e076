//! Finite weighted point clouds.

use std::collections::HashMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, KacError, Result};
use crate::kinetic::{norm_sq, ParticleState, Velocity};

/// A finite signed measure `sum_k w_k delta_{x_k}` on velocity space.
///
/// Points are kept distinct: constructors merge exactly equal points by adding
/// their weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPointCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

fn key(p: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point.
    p.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
}

impl WeightedPointCloud {
    /// Builds a cloud from a row-major point buffer, merging duplicates.
    ///
    /// # Errors
    ///
    /// Inconsistent lengths, `dim == 0`, or non-finite entries.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(KacError::InvalidArgument("cloud dimension must be positive".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(KacError::InvalidArgument(format!(
                "{} coordinates do not match {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().chain(&weights).any(|x| !x.is_finite()) {
            return Err(KacError::InvalidArgument("non-finite point or weight".into()));
        }
        let mut cloud = Self { dim, points, weights };
        cloud.merge_duplicates();
        Ok(cloud)
    }

    /// Cloud with no atoms.
    #[must_use]
    pub fn empty(dim: usize) -> Self {
        Self { dim, points: Vec::new(), weights: Vec::new() }
    }

    /// Uniform probability on the rows of `points`.
    ///
    /// # Errors
    ///
    /// As [`WeightedPointCloud::new`], or no points.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() {
            return Err(KacError::EmptyMeasure);
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// # Errors
    ///
    /// Mixed dimensions or lengths.
    pub fn from_velocities(vs: &[Velocity], weights: Vec<f64>) -> Result<Self> {
        let dim = vs.first().map_or(0, Velocity::dim);
        let mut pts = Vec::with_capacity(vs.len() * dim);
        for v in vs {
            check_dim(dim, v.dim())?;
            pts.extend_from_slice(&v.0);
        }
        Self::new(dim, pts, weights)
    }

    /// Empirical measure `(1/N) sum delta_{v_i}`.
    #[must_use]
    pub fn from_state(state: &ParticleState) -> Self {
        let n = state.len();
        Self::new(state.dim(), state.as_flat().to_vec(), vec![1.0 / n as f64; n]).expect("particle states are finite")
    }

    /// Dirac mass.
    #[must_use]
    pub fn dirac(v: &[f64]) -> Self {
        Self { dim: v.len(), points: v.to_vec(), weights: vec![1.0] }
    }

    fn merge_duplicates(&mut self) {
        let n = self.weights.len();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(n);
        let mut pts = Vec::with_capacity(self.points.len());
        let mut ws: Vec<f64> = Vec::with_capacity(n);
        let mut merged = false;
        for k in 0..n {
            let p = &self.points[k * self.dim..(k + 1) * self.dim];
            match index.get(&key(p)) {
                Some(&slot) => {
                    ws[slot] += self.weights[k];
                    merged = true;
                }
                None => {
                    index.insert(key(p), ws.len());
                    pts.extend_from_slice(p);
                    ws.push(self.weights[k]);
                }
            }
        }
        if merged {
            self.points = pts;
            self.weights = ws;
        }
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct atoms.
    #[must_use]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    #[must_use]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    #[inline]
    #[must_use]
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    #[must_use]
    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    #[must_use]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    #[must_use]
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Total variation mass `sum |w_k|`.
    #[must_use]
    pub fn abs_mass(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    #[must_use]
    pub fn is_nonnegative(&self) -> bool {
        self.weights.iter().all(|w| *w >= 0.0)
    }

    #[must_use]
    pub fn is_probability(&self, tol: f64) -> bool {
        self.is_nonnegative() && (self.total_mass() - 1.0).abs() <= tol
    }

    /// `sum w_k f(x_k)`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Mean energy `sum w_k |x_k|^2`.
    #[must_use]
    pub fn energy(&self) -> f64 {
        self.integrate(norm_sq)
    }

    /// Momentum `sum w_k x_k`.
    #[must_use]
    pub fn momentum(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for (x, w) in self.iter() {
            for (pk, xk) in p.iter_mut().zip(x) {
                *pk += w * xk;
            }
        }
        p
    }

    /// Absolute value `|mu|` of a signed cloud.
    #[must_use]
    pub fn abs(&self) -> Self {
        Self { dim: self.dim, points: self.points.clone(), weights: self.weights.iter().map(|w| w.abs()).collect() }
    }

    /// Cloud with every weight multiplied by `factor`.
    #[must_use]
    pub fn scaled(&self, factor: f64) -> Self {
        Self { dim: self.dim, points: self.points.clone(), weights: self.weights.iter().map(|w| w * factor).collect() }
    }

    /// Cloud with weights `w_k * h(x_k)`.
    #[must_use]
    pub fn reweighted<F: Fn(&[f64]) -> f64>(&self, h: F) -> Self {
        let weights = self.iter().map(|(x, w)| w * h(x)).collect();
        Self { dim: self.dim, points: self.points.clone(), weights }
    }

    /// `self + factor * other`, merging shared atoms.
    ///
    /// # Errors
    ///
    /// Dimension mismatch.
    pub fn add_scaled(&self, other: &Self, factor: f64) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        let mut ws = self.weights.clone();
        ws.extend(other.weights.iter().map(|w| w * factor));
        Self::new(self.dim, pts, ws)
    }

    /// Drops atoms whose weight is exactly zero.
    #[must_use]
    pub fn without_zero_atoms(&self) -> Self {
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for (x, w) in self.iter() {
            if w != 0.0 {
                pts.extend_from_slice(x);
                ws.push(w);
            }
        }
        Self { dim: self.dim, points: pts, weights: ws }
    }

    /// Random sub-cloud with at most `k` atoms and the same signed mass per sign.
    ///
    /// Equal-weight clouds are subsampled without replacement; otherwise atoms
    /// are drawn with replacement proportionally to `|w|` and each draw carries
    /// `sign(w) * sum|w| / k`.
    pub fn subsample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Self {
        let n = self.len();
        if k >= n || k == 0 {
            return self.clone();
        }
        let first = self.weights[0];
        let equal = self.weights.iter().all(|w| *w == first);
        if equal {
            let mass = first * n as f64;
            let mut idx = sample_indices(rng, n, k).into_vec();
            idx.sort_unstable();
            let mut pts = Vec::with_capacity(k * self.dim);
            for &i in &idx {
                pts.extend_from_slice(self.point(i));
            }
            return Self { dim: self.dim, points: pts, weights: vec![mass / k as f64; k] };
        }
        let abs_total = self.abs_mass();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w.abs();
            cum.push(acc);
        }
        let mut pts = Vec::with_capacity(k * self.dim);
        let mut ws = Vec::with_capacity(k);
        for _ in 0..k {
            let u = rng.random::<f64>() * acc;
            let i = cum.partition_point(|c| *c <= u).min(n - 1);
            pts.extend_from_slice(self.point(i));
            ws.push(self.weights[i].signum() * abs_total / k as f64);
        }
        Self::new(self.dim, pts, ws).expect("subsample of a valid cloud")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn duplicates_merge() {
        let c = WeightedPointCloud::new(2, vec![1.0, 0.0, 1.0, -0.0, 2.0, 2.0], vec![0.25, 0.25, 0.5]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.weight(0), 0.5);
        assert!(c.is_probability(1e-15));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(WeightedPointCloud::new(2, vec![1.0, 2.0, 3.0], vec![1.0]).is_err());
        assert!(WeightedPointCloud::new(1, vec![f64::NAN], vec![1.0]).is_err());
        assert!(matches!(WeightedPointCloud::uniform(3, vec![]), Err(KacError::EmptyMeasure)));
    }

    #[test]
    fn uniform_subsample_keeps_mass() {
        let pts: Vec<f64> = (0..200).map(f64::from).collect();
        let c = WeightedPointCloud::uniform(2, pts).unwrap();
        let mut rng = stream(5, 0, 0);
        let s = c.subsample(10, &mut rng);
        assert_eq!(s.len(), 10);
        assert!((s.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn signed_subsample_keeps_sign_structure() {
        let c = WeightedPointCloud::new(1, vec![0.0, 1.0, 2.0, 3.0], vec![0.5, -0.25, 0.125, -0.125]).unwrap();
        let mut rng = stream(6, 0, 0);
        let s = c.subsample(3, &mut rng);
        assert!((s.abs_mass() - c.abs_mass()).abs() < 1e-14);
        for (x, w) in s.iter() {
            let i = x[0] as usize;
            assert_eq!(w.signum(), c.weight(i).signum());
        }
    }
}
