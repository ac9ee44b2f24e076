use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{KacError, Result};
use crate::kinetic::{norm_sq, ParticleState};
use crate::measure::WeightedPointCloud;
use crate::metrics::lambda_k;

/// Tolerance on the total mass of each environment cloud.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// One constant piece of the environment with its partner samplers.
#[derive(Clone, Debug)]
pub(crate) struct Segment {
    pub cloud: WeightedPointCloud,
    pub mass: f64,
    pub first_moment: f64,
    pub lambda3: f64,
    by_weight: WeightedAliasIndex<f64>,
    by_speed: Option<WeightedAliasIndex<f64>>,
}

impl Segment {
    fn new(cloud: WeightedPointCloud) -> Result<Self> {
        let speeds: Vec<f64> = cloud.iter().map(|(x, w)| norm_sq(x).sqrt() * w).collect();
        let first_moment = speeds.iter().sum::<f64>();
        let by_weight = WeightedAliasIndex::new(cloud.weights().to_vec())
            .map_err(|e| KacError::InvalidArgument(format!("environment weights: {e}")))?;
        let by_speed = if first_moment > 0.0 {
            Some(
                WeightedAliasIndex::new(speeds)
                    .map_err(|e| KacError::InvalidArgument(format!("environment weights: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { mass: cloud.total_mass(), first_moment, lambda3: lambda_k(&cloud, 3.0)?, cloud, by_weight, by_speed })
    }

    /// Majorant `2 (|v| M + m_1)` of the branching rate `2 int |v - x| rho(dx)`.
    #[inline]
    pub fn majorant(&self, speed: f64) -> f64 {
        2.0 * (speed * self.mass + self.first_moment)
    }

    /// Exact branching rate of a particle at `v`.
    #[cfg(test)]
    pub fn rate(&self, v: &[f64]) -> f64 {
        2.0 * self.cloud.integrate(|x| crate::kinetic::dist(v, x))
    }

    /// Draws a partner index from the density proportional to
    /// `(|v| + |x|) rho(dx)` and accepts it with probability
    /// `|v - x| / (|v| + |x|)`, which leaves partners distributed as
    /// `|v - x| rho(dx)`.
    pub fn propose<R: Rng + ?Sized>(&self, v: &[f64], speed: f64, rng: &mut R) -> Option<usize> {
        let a = speed * self.mass;
        let k = match &self.by_speed {
            Some(by_speed) if rng.random::<f64>() * (a + self.first_moment) >= a => by_speed.sample(rng),
            _ => self.by_weight.sample(rng),
        };
        let x = self.cloud.point(k);
        let r = crate::kinetic::dist(v, x);
        (rng.random::<f64>() * (speed + norm_sq(x).sqrt()) < r).then_some(k)
    }
}

/// A piecewise-constant environment `rho_t`: cloud `k` is in force on
/// `[times[k], times[k + 1])`. The last endpoint may be infinite.
#[derive(Clone, Debug)]
pub struct Environment {
    dim: usize,
    times: Vec<f64>,
    segments: Vec<Segment>,
}

impl Environment {
    /// # Errors
    ///
    /// `times` not strictly increasing from a finite start, a count mismatch,
    /// mixed dimensions, or a cloud that is not a probability measure within
    /// [`MASS_TOLERANCE`].
    pub fn new(times: Vec<f64>, clouds: Vec<WeightedPointCloud>) -> Result<Self> {
        if clouds.is_empty() || times.len() != clouds.len() + 1 {
            return Err(KacError::InvalidArgument(format!(
                "environment needs one more time than clouds, got {} times and {} clouds",
                times.len(),
                clouds.len()
            )));
        }
        if !times[0].is_finite() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(KacError::InvalidArgument("environment times must increase strictly".into()));
        }
        if times[..times.len() - 1].iter().any(|t| !t.is_finite()) {
            return Err(KacError::InvalidArgument("only the last environment time may be infinite".into()));
        }
        let dim = clouds[0].dim();
        let mut segments = Vec::with_capacity(clouds.len());
        for c in clouds {
            crate::error::check_dim(dim, c.dim())?;
            if c.is_empty() {
                return Err(KacError::EmptyMeasure);
            }
            if !c.is_nonnegative() {
                return Err(KacError::SignedMeasure);
            }
            if (c.total_mass() - 1.0).abs() > MASS_TOLERANCE {
                return Err(KacError::MassMismatch(c.total_mass(), 1.0));
            }
            segments.push(Segment::new(c)?);
        }
        Ok(Self { dim, times, segments })
    }

    /// The same cloud for all `t >= 0`.
    ///
    /// # Errors
    ///
    /// As [`Environment::new`].
    pub fn constant(cloud: WeightedPointCloud) -> Result<Self> {
        Self::new(vec![0.0, f64::INFINITY], vec![cloud])
    }

    /// Empirical measures of pooled snapshots: `snapshots[k]` holds the
    /// replica states at `times[k]`, in force until `times[k + 1]`.
    ///
    /// # Errors
    ///
    /// As [`Environment::new`], or an empty snapshot list.
    pub fn from_snapshots(times: Vec<f64>, snapshots: &[Vec<ParticleState>]) -> Result<Self> {
        let clouds = snapshots
            .iter()
            .map(|states| {
                let dim = states.first().ok_or(KacError::EmptyMeasure)?.dim();
                let mut pts = Vec::new();
                for s in states {
                    crate::error::check_dim(dim, s.dim())?;
                    pts.extend_from_slice(s.as_flat());
                }
                WeightedPointCloud::uniform(dim, pts)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, clouds)
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[must_use]
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[must_use]
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    #[must_use]
    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn clouds(&self) -> impl ExactSizeIterator<Item = &WeightedPointCloud> {
        self.segments.iter().map(|s| &s.cloud)
    }

    pub(crate) fn segment(&self, k: usize) -> &Segment {
        &self.segments[k]
    }

    /// Index of the piece containing `t`.
    pub(crate) fn segment_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|s| *s <= t);
        k.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Right end of piece `k`.
    pub(crate) fn segment_end(&self, k: usize) -> f64 {
        self.times[k + 1]
    }

    /// # Errors
    ///
    /// `[s, t]` not inside the covered range, or `s > t`.
    pub fn check_range(&self, s: f64, t: f64) -> Result<()> {
        if !(s <= t) {
            return Err(KacError::InvalidArgument(format!("start {s} after end {t}")));
        }
        if s < self.start() {
            return Err(KacError::EnvironmentRange(s));
        }
        if t > self.end() {
            return Err(KacError::EnvironmentRange(t));
        }
        Ok(())
    }

    /// `Lambda_3` of each piece.
    #[must_use]
    pub fn lambda3_series(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.lambda3).collect()
    }

    /// `int_s^t Lambda_3(rho_r) dr`.
    ///
    /// # Errors
    ///
    /// As [`Environment::check_range`].
    pub fn lambda3_integral(&self, s: f64, t: f64) -> Result<f64> {
        self.check_range(s, t)?;
        let mut acc = 0.0;
        for (k, seg) in self.segments.iter().enumerate() {
            let lo = self.times[k].max(s);
            let hi = self.times[k + 1].min(t);
            if hi > lo {
                acc += seg.lambda3 * (hi - lo);
            }
        }
        Ok(acc)
    }

    /// Continuity constant `3 exp(8 int_s^t Lambda_3)`.
    ///
    /// # Errors
    ///
    /// As [`Environment::check_range`].
    pub fn continuity_constant(&self, s: f64, t: f64) -> Result<f64> {
        Ok(3.0 * (8.0 * self.lambda3_integral(s, t)?).exp())
    }

    /// Largest `|<|v|^2, rho> - 1|` over the pieces.
    #[must_use]
    pub fn energy_deviation(&self) -> f64 {
        self.segments.iter().map(|s| (s.cloud.energy() - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn cloud(points: &[[f64; 2]], weights: &[f64]) -> WeightedPointCloud {
        WeightedPointCloud::new(2, points.iter().flatten().copied().collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn validates_shape_and_mass() {
        let c = cloud(&[[1.0, 0.0], [-1.0, 0.0]], &[0.5, 0.5]);
        assert!(Environment::new(vec![0.0, 1.0], vec![c.clone()]).is_ok());
        assert!(Environment::new(vec![0.0], vec![c.clone()]).is_err());
        assert!(Environment::new(vec![1.0, 1.0], vec![c.clone()]).is_err());
        assert!(Environment::new(vec![0.0, f64::INFINITY, 2.0], vec![c.clone(), c.clone()]).is_err());
        let heavy = cloud(&[[1.0, 0.0]], &[2.0]);
        assert!(matches!(Environment::constant(heavy), Err(KacError::MassMismatch(..))));
        let signed = cloud(&[[1.0, 0.0], [0.0, 1.0]], &[1.5, -0.5]);
        assert!(matches!(Environment::constant(signed), Err(KacError::SignedMeasure)));
    }

    #[test]
    fn dirac_at_rest_gives_closed_form_constant() {
        let env = Environment::constant(WeightedPointCloud::dirac(&[0.0, 0.0])).unwrap();
        assert!((env.lambda3_integral(0.0, 0.7).unwrap() - 0.7).abs() < 1e-15);
        let z = env.continuity_constant(0.0, 0.7).unwrap();
        assert!((z - 3.0 * (5.6f64).exp()).abs() < 1e-9 * z);
    }

    #[test]
    fn piecewise_integral_and_lookup() {
        let a = cloud(&[[0.0, 0.0]], &[1.0]);
        let b = cloud(&[[1.0, 1.0]], &[1.0]);
        let env = Environment::new(vec![0.0, 1.0, 3.0], vec![a, b]).unwrap();
        let l3b = 3f64.powf(1.5);
        assert!((env.lambda3_integral(0.5, 2.0).unwrap() - (0.5 + l3b)).abs() < 1e-12);
        assert_eq!(env.segment_at(0.0), 0);
        assert_eq!(env.segment_at(0.999), 0);
        assert_eq!(env.segment_at(1.0), 1);
        assert_eq!(env.segment_at(3.0), 1);
        assert!(matches!(env.check_range(0.0, 3.5), Err(KacError::EnvironmentRange(_))));
    }

    #[test]
    fn accepted_partners_follow_relative_speed() {
        let c = cloud(&[[1.0, 0.0], [-1.0, 0.5], [0.0, 2.0], [0.3, 0.3]], &[0.1, 0.4, 0.2, 0.3]);
        let env = Environment::constant(c.clone()).unwrap();
        let seg = env.segment(0);
        let v = [0.5, -0.5];
        let speed = norm_sq(&v).sqrt();
        let exact: Vec<f64> = c.iter().map(|(x, w)| w * crate::kinetic::dist(&v, x)).collect();
        let total: f64 = exact.iter().sum();
        assert!((seg.rate(&v) - 2.0 * total).abs() < 1e-12);
        let mut rng = stream(21, 0, 0);
        let mut counts = [0u64; 4];
        let mut proposals = 0u64;
        let mut accepted = 0u64;
        while accepted < 200_000 {
            proposals += 1;
            if let Some(k) = seg.propose(&v, speed, &mut rng) {
                counts[k] += 1;
                accepted += 1;
            }
        }
        for k in 0..4 {
            let p = exact[k] / total;
            let se = (p * (1.0 - p) / accepted as f64).sqrt();
            assert!((counts[k] as f64 / accepted as f64 - p).abs() < 4.0 * se);
        }
        let ratio = accepted as f64 / proposals as f64;
        let want = 2.0 * total / seg.majorant(speed);
        assert!((ratio - want).abs() < 0.01, "{ratio} vs {want}");
    }
}
