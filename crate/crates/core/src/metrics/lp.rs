//! Exact weighted distance between finite clouds.
//!
//! With `c_i = (1 + |x_i|^2)(mu_i - nu_i)` on the joint support, the distance
//! is `max sum c_i g_i` over `|g_i| <= 1`, `|g_i - g_j| <= |x_i - x_j|`. This
//! is the dual of a transport problem with an extra ground node reachable at
//! unit cost, solved here by network simplex. The optimal prices are then
//! replaced by their c-transform against the sinks, which is exactly feasible
//! and keeps the optimal value.

use rayon::prelude::*;

use crate::error::{check_dim, KacError, Result};
use crate::kinetic::{dist, norm_sq};
use crate::measure::WeightedPointCloud;

use super::bipartite::BipartiteNetwork;

/// Default bound on the joint support size of an exact solve.
pub const DEFAULT_LP_CAP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LpOptions {
    /// Largest joint support accepted.
    pub cap: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_LP_CAP }
    }
}

/// Values of a test function `g` (bounded by 1, 1-Lipschitz) on finitely
/// many points, extendable to all of velocity space.
#[derive(Clone, Debug, PartialEq)]
pub struct DualWitness {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

impl DualWitness {
    #[must_use]
    pub fn new(dim: usize, points: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(points.len(), dim * values.len());
        Self { dim, points, values }
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[must_use]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest 1-Lipschitz extension, clipped to `[-1, 1]`.
    #[must_use]
    pub fn extend(&self, v: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (x, g) in self.points.chunks_exact(self.dim).zip(&self.values) {
            best = best.min(g + dist(v, x));
        }
        best.clamp(-1.0, 1.0)
    }

    /// Worst violation of the bound and Lipschitz constraints on the stored
    /// points (zero or negative when feasible).
    #[must_use]
    pub fn max_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (a, ga) in self.values.iter().enumerate() {
            worst = worst.max(ga.abs() - 1.0);
            for b in a + 1..self.len() {
                let gap = (ga - self.values[b]).abs() - dist(self.point(a), self.point(b));
                worst = worst.max(gap);
            }
        }
        worst
    }

    /// `<(1 + |v|^2) g, mu - nu>` with `g` the extension of this witness.
    #[must_use]
    pub fn objective(&self, mu: &WeightedPointCloud, nu: &WeightedPointCloud) -> f64 {
        let side = |c: &WeightedPointCloud| -> f64 {
            let terms: Vec<f64> = (0..c.len())
                .into_par_iter()
                .map(|k| {
                    let x = c.point(k);
                    c.weight(k) * (1.0 + norm_sq(x)) * self.extend(x)
                })
                .collect();
            terms.iter().sum()
        };
        side(mu) - side(nu)
    }

    /// The witness for `-g`.
    #[must_use]
    pub fn negated(&self) -> Self {
        Self { dim: self.dim, points: self.points.clone(), values: self.values.iter().map(|g| -g).collect() }
    }
}

/// Exact weighted distance with its optimal test function.
#[derive(Clone, Debug)]
pub struct WassersteinLp {
    /// Primal transport cost.
    pub value: f64,
    /// Objective of `witness`; equal to `value` up to rounding.
    pub dual_value: f64,
    pub witness: DualWitness,
    pub support_size: usize,
}

/// [`wasserstein_lp_with`] under the default cap.
///
/// # Errors
///
/// See [`wasserstein_lp_with`].
pub fn wasserstein_lp(mu: &WeightedPointCloud, nu: &WeightedPointCloud) -> Result<WassersteinLp> {
    wasserstein_lp_with(mu, nu, &LpOptions::default())
}

/// Exact `W(mu, nu)` for possibly signed clouds.
///
/// # Errors
///
/// Dimension mismatch, joint support above `opts.cap`, or solver failure.
pub fn wasserstein_lp_with(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    opts: &LpOptions,
) -> Result<WassersteinLp> {
    check_dim(mu.dim(), nu.dim())?;
    let d = mu.dim();
    let joint = mu.add_scaled(nu, -1.0)?;
    let m = joint.len();
    if m > opts.cap {
        return Err(KacError::SupportCapExceeded { size: m, cap: opts.cap });
    }
    let c: Vec<f64> = joint.iter().map(|(x, w)| (1.0 + norm_sq(x)) * w).collect();
    let mut src = Vec::new();
    let mut snk = Vec::new();
    let mut supply = Vec::new();
    let mut sink_supply = Vec::new();
    for (k, ck) in c.iter().enumerate() {
        if *ck > 0.0 {
            src.extend_from_slice(joint.point(k));
            supply.push(*ck);
        } else if *ck < 0.0 {
            snk.extend_from_slice(joint.point(k));
            sink_supply.push(*ck);
        }
    }
    let n_src = supply.len();
    let n_snk = sink_supply.len();
    let net_mass: f64 = c.iter().sum();
    supply.extend_from_slice(&sink_supply);
    supply.push(-net_mass);

    let (value, sink_prices) = if n_src + n_snk == 0 {
        (0.0, Vec::new())
    } else {
        let net = BipartiteNetwork::new(d, &src, &snk, Some(1.0));
        let sol = net.solve(&supply)?;
        let ground = sol.potentials[n_src + n_snk];
        let prices: Vec<f64> = sol.potentials[n_src..n_src + n_snk].iter().map(|y| y - ground).collect();
        (sol.cost, prices)
    };

    // c-transform against the sinks.
    let values: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| {
            let x = joint.point(k);
            let mut g: f64 = 1.0;
            for (t, u) in snk.chunks_exact(d).zip(&sink_prices) {
                g = g.min(u + dist(x, t));
            }
            g.max(-1.0)
        })
        .collect();
    let dual_value: f64 = c.iter().zip(&values).map(|(ci, gi)| ci * gi).sum();
    let witness = DualWitness::new(d, joint.points_flat().to_vec(), values);
    Ok(WassersteinLp { value, dual_value, witness, support_size: m })
}
