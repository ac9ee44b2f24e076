use rand::Rng;

use crate::error::{KacError, Result};
use crate::kinetic::{dist, ParticleState};

/// Total jump rate `sum_{i<j} 2 |v_i - v_j| / N`, computed from scratch.
///
/// # Errors
///
/// Fewer than two particles.
pub fn total_rate(state: &ParticleState) -> Result<f64> {
    let n = state.len();
    if n < 2 {
        return Err(KacError::TooFewParticles { min: 2, found: n });
    }
    Ok(2.0 * state.pairwise_speed_sum() / n as f64)
}

/// Per-particle row sums `r_i = sum_j |v_i - v_j|` maintained across
/// collisions.
///
/// Each unordered pair appears twice in `sum_i r_i`, so the total rate is
/// `sum_i r_i / N`.
#[derive(Clone, Debug)]
pub struct PairRateIndex {
    row_sums: Vec<f64>,
    total: f64,
    updates: u64,
}

impl PairRateIndex {
    #[must_use]
    pub fn from_state(state: &ParticleState) -> Self {
        let mut s = Self { row_sums: Vec::new(), total: 0.0, updates: 0 };
        s.row_sums = Self::scratch_rows(state);
        s.retotal();
        s
    }

    fn scratch_rows(state: &ParticleState) -> Vec<f64> {
        let n = state.len();
        let mut rows = vec![0.0; n];
        for i in 0..n {
            let vi = state.velocity(i);
            for j in i + 1..n {
                let r = dist(vi, state.velocity(j));
                rows[i] += r;
                rows[j] += r;
            }
        }
        rows
    }

    fn retotal(&mut self) {
        self.total = self.row_sums.iter().sum::<f64>() / self.row_sums.len() as f64;
    }

    #[must_use]
    pub fn total_rate(&self) -> f64 {
        self.total
    }

    #[must_use]
    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Collisions applied since the last full recomputation.
    #[must_use]
    pub fn updates_since_refresh(&self) -> u64 {
        self.updates
    }

    /// Recomputes every row from scratch and returns the largest relative
    /// discrepancy `|r_inc - r_exact| / max(r_exact, mean row)` it removed.
    pub fn refresh(&mut self, state: &ParticleState) -> f64 {
        let exact = Self::scratch_rows(state);
        let scale = (exact.iter().sum::<f64>() / exact.len() as f64).max(f64::MIN_POSITIVE);
        let drift = self.row_sums.iter().zip(&exact).map(|(a, b)| (a - b).abs() / b.max(scale)).fold(0.0, f64::max);
        self.row_sums = exact;
        self.updates = 0;
        self.retotal();
        drift
    }

    /// Draws `i` proportional to `r_i`, then `j != i` proportional to
    /// `|v_i - v_j|`. Returns `None` when the selected row is numerically
    /// empty, which only happens once incremental rounding has left a
    /// spurious positive rate on a collapsed state.
    pub fn sample_pair<R: Rng + ?Sized>(&self, state: &ParticleState, rng: &mut R) -> Option<(usize, usize)> {
        let n = self.row_sums.len();
        let target = rng.random::<f64>() * self.total * n as f64;
        let mut acc = 0.0;
        let mut i = n;
        let mut last_positive = n;
        for (k, &r) in self.row_sums.iter().enumerate() {
            if r > 0.0 {
                last_positive = k;
            }
            acc += r;
            if acc > target && r > 0.0 {
                i = k;
                break;
            }
        }
        if i == n {
            i = last_positive;
        }
        if i == n {
            return None;
        }
        let vi = state.velocity(i);
        let row: f64 = (0..n).filter(|&k| k != i).map(|k| dist(vi, state.velocity(k))).sum();
        if !(row > 0.0) {
            return None;
        }
        let target = rng.random::<f64>() * row;
        let mut acc = 0.0;
        let mut j = n;
        for k in (0..n).filter(|&k| k != i) {
            let r = dist(vi, state.velocity(k));
            if r > 0.0 {
                j = k;
                acc += r;
                if acc > target {
                    break;
                }
            }
        }
        Some((i, j))
    }

    /// Incremental O(N) update after particles `i` and `j` moved from
    /// `old_i`, `old_j` to their current values in `state`.
    pub fn update(&mut self, state: &ParticleState, i: usize, j: usize, old_i: &[f64], old_j: &[f64]) {
        let new_i = state.velocity(i);
        let new_j = state.velocity(j);
        let mut ri = 0.0;
        let mut rj = 0.0;
        for (k, rk) in self.row_sums.iter_mut().enumerate() {
            if k == i || k == j {
                continue;
            }
            let vk = state.velocity(k);
            let ai = dist(vk, new_i);
            let aj = dist(vk, new_j);
            *rk += (ai - dist(vk, old_i)) + (aj - dist(vk, old_j));
            ri += ai;
            rj += aj;
        }
        let rij = dist(new_i, new_j);
        self.row_sums[i] = ri + rij;
        self.row_sums[j] = rj + rij;
        self.updates += 1;
        self.retotal();
    }
}
