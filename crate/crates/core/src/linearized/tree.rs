use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, KacError, Result};
use crate::kinetic::{collide_into, norm_sq, sample_sigma_into};

use super::environment::Environment;

/// Default cap on the population of one tree.
pub const DEFAULT_POPULATION_CAP: usize = 100_000;

/// A finite signed particle system `sum s_p delta_{v_p}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedParticleSystem {
    dim: usize,
    velocities: Vec<f64>,
    signs: Vec<f64>,
    time: f64,
    events: u64,
}

/// One branching: particle `parent` at `before` met `partner` and was
/// replaced by `(v', s)`, `(partner', s)` and `(partner, -s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchEvent {
    pub time: f64,
    pub parent: usize,
    pub sign: f64,
    pub before: Vec<f64>,
    pub partner: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl SignedParticleSystem {
    /// One particle `(v0, +1)` at time `t0`.
    ///
    /// # Errors
    ///
    /// `v0` of dimension below 2.
    pub fn single(v0: &[f64], t0: f64) -> Result<Self> {
        if v0.len() < 2 {
            return Err(KacError::DimensionTooSmall(v0.len()));
        }
        Ok(Self { dim: v0.len(), velocities: v0.to_vec(), signs: vec![1.0], time: t0, events: 0 })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    #[must_use]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[must_use]
    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn particles(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.velocities.chunks_exact(self.dim).zip(self.signs.iter().copied())
    }

    /// Signed mass `sum s_p`.
    #[must_use]
    pub fn signed_mass(&self) -> f64 {
        self.signs.iter().sum()
    }

    /// Signed momentum `sum s_p v_p`.
    #[must_use]
    pub fn signed_momentum(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for (v, s) in self.particles() {
            for (pk, vk) in p.iter_mut().zip(v) {
                *pk += s * vk;
            }
        }
        p
    }

    /// Signed energy `sum s_p |v_p|^2`.
    #[must_use]
    pub fn signed_energy(&self) -> f64 {
        self.particles().map(|(v, s)| s * norm_sq(v)).sum()
    }

    /// `<1 + |v|^2, |Xi|>`.
    #[must_use]
    pub fn weighted_total_variation(&self) -> f64 {
        self.particles().map(|(v, _)| 1.0 + norm_sq(v)).sum()
    }

    /// Advances to the next branching event or to `t_max`, whichever comes
    /// first. Uses a single clock at the summed majorant rate.
    ///
    /// # Errors
    ///
    /// Dimension mismatch with the environment, or a time range it does not
    /// cover.
    pub fn branch_step<R: Rng + ?Sized>(
        &mut self,
        env: &Environment,
        t_max: f64,
        rng: &mut R,
    ) -> Result<Option<BranchEvent>> {
        check_dim(env.dim(), self.dim)?;
        env.check_range(self.time, t_max)?;
        let speeds: Vec<f64> = self.velocities.chunks_exact(self.dim).map(|v| norm_sq(v).sqrt()).collect();
        loop {
            if self.time >= t_max {
                return Ok(None);
            }
            let k = env.segment_at(self.time);
            let seg = env.segment(k);
            let end = env.segment_end(k).min(t_max);
            let rates: Vec<f64> = speeds.iter().map(|&s| seg.majorant(s)).collect();
            let total: f64 = rates.iter().sum();
            let tau = if total > 0.0 { self.time + rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };
            if tau >= end {
                self.time = end;
                continue;
            }
            self.time = tau;
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut p = rates.len() - 1;
            for (q, r) in rates.iter().enumerate() {
                acc += r;
                if acc > target {
                    p = q;
                    break;
                }
            }
            let v = self.velocities[p * self.dim..(p + 1) * self.dim].to_vec();
            let Some(partner) = seg.propose(&v, speeds[p], rng) else {
                continue;
            };
            let x = seg.cloud.point(partner).to_vec();
            let mut sigma = vec![0.0; self.dim];
            sample_sigma_into(rng, &mut sigma);
            let mut a = vec![0.0; self.dim];
            let mut b = vec![0.0; self.dim];
            collide_into(&v, &x, &sigma, &mut a, &mut b);
            let s = self.signs[p];
            self.velocities[p * self.dim..(p + 1) * self.dim].copy_from_slice(&a);
            self.velocities.extend_from_slice(&b);
            self.signs.push(s);
            self.velocities.extend_from_slice(&x);
            self.signs.push(-s);
            self.events += 1;
            return Ok(Some(BranchEvent { time: tau, parent: p, sign: s, before: v, partner: x, sigma }));
        }
    }
}

/// How a tree ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeOutcome {
    pub events: u64,
    pub population: usize,
    pub truncated: bool,
}

/// Reusable buffers for [`run_tree`]; after a run `leaves` holds the
/// surviving velocities and `signs` their signs.
#[derive(Clone, Debug, Default)]
pub struct TreeBuffers {
    pub leaves: Vec<f64>,
    pub signs: Vec<f64>,
    stack: Vec<f64>,
    stack_meta: Vec<(f64, f64)>,
    current: Vec<f64>,
    scratch: Vec<f64>,
}

impl TreeBuffers {
    pub fn leaves(&self, dim: usize) -> impl Iterator<Item = (&[f64], f64)> {
        self.leaves.chunks_exact(dim).zip(self.signs.iter().copied())
    }
}

/// Grows one tree from `(v0, sign)` at time `s` to time `t`, each particle
/// carrying its own exponential clock. Leaves alive at `t` end up in `buf`.
/// A tree whose population would exceed `cap` stops early and is flagged.
///
/// The caller must have checked `[s, t]` against `env` and the dimension.
#[allow(clippy::too_many_arguments)]
pub fn run_tree<R: Rng + ?Sized>(
    env: &Environment,
    v0: &[f64],
    sign: f64,
    s: f64,
    t: f64,
    cap: usize,
    rng: &mut R,
    buf: &mut TreeBuffers,
) -> TreeOutcome {
    let d = v0.len();
    buf.leaves.clear();
    buf.signs.clear();
    buf.stack.clear();
    buf.stack_meta.clear();
    buf.scratch.resize(3 * d, 0.0);
    buf.stack.extend_from_slice(v0);
    buf.stack_meta.push((sign, s));
    let mut events = 0u64;
    while let Some((sg, birth)) = buf.stack_meta.pop() {
        let base = buf.stack.len() - d;
        buf.current.clear();
        buf.current.extend_from_slice(&buf.stack[base..]);
        buf.stack.truncate(base);
        let v = &buf.current[..];
        let speed = norm_sq(v).sqrt();
        let mut now = birth;
        let mut k = env.segment_at(now);
        let branched = loop {
            let seg = env.segment(k);
            let end = env.segment_end(k).min(t);
            let rate = seg.majorant(speed);
            let tau = if rate > 0.0 { now + rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
            if tau >= end {
                if end >= t {
                    break None;
                }
                now = end;
                k += 1;
                continue;
            }
            now = tau;
            if let Some(p) = seg.propose(v, speed, rng) {
                break Some((k, p));
            }
        };
        match branched {
            None => {
                buf.leaves.extend_from_slice(v);
                buf.signs.push(sg);
            }
            Some((k, p)) => {
                events += 1;
                if 1 + 2 * events as usize > cap {
                    return TreeOutcome { events, population: 1 + 2 * events as usize, truncated: true };
                }
                let x = env.segment(k).cloud.point(p);
                let (sigma, rest) = buf.scratch.split_at_mut(d);
                sample_sigma_into(rng, sigma);
                let (a, b) = rest.split_at_mut(d);
                collide_into(v, x, sigma, a, b);
                buf.stack.extend_from_slice(x);
                buf.stack_meta.push((-sg, now));
                buf.stack.extend_from_slice(b);
                buf.stack_meta.push((sg, now));
                buf.stack.extend_from_slice(a);
                buf.stack_meta.push((sg, now));
            }
        }
    }
    TreeOutcome { events, population: buf.signs.len(), truncated: false }
}
