use rand::Rng;

use crate::kinetic::{dist, norm_sq, ParticleState};

/// Fenwick tree over particle speeds `|v_i|`.
///
/// The pair rate is dominated by `2 (|v_i| + |v_j|) / N`, whose total over
/// unordered pairs is `2 (N - 1) S / N` with `S = sum |v_i|`. A proposal picks
/// `i` proportional to `|v_i|` and `j` uniformly among the others, which gives
/// the pair `{i, j}` probability `(|v_i| + |v_j|) / ((N - 1) S)`; it is then
/// accepted with probability `|v_i - v_j| / (|v_i| + |v_j|)`.
#[derive(Clone, Debug)]
pub struct SpeedIndex {
    speeds: Vec<f64>,
    tree: Vec<f64>,
    updates: u64,
}

impl SpeedIndex {
    #[must_use]
    pub fn from_state(state: &ParticleState) -> Self {
        let speeds: Vec<f64> = state.velocities().map(|v| norm_sq(v).sqrt()).collect();
        let mut s = Self { tree: Vec::new(), speeds, updates: 0 };
        s.rebuild();
        s
    }

    fn rebuild(&mut self) {
        let n = self.speeds.len();
        let mut tree = vec![0.0; n + 1];
        for (k, &s) in self.speeds.iter().enumerate() {
            tree[k + 1] += s;
            let parent = (k + 1) + ((k + 1) & (k + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[k + 1];
            }
        }
        self.tree = tree;
        self.updates = 0;
    }

    /// Sum of all speeds.
    #[must_use]
    pub fn speed_sum(&self) -> f64 {
        let mut k = self.speeds.len();
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Majorant rate `2 (N - 1) S / N`.
    #[must_use]
    pub fn majorant(&self) -> f64 {
        let n = self.speeds.len() as f64;
        (2.0 * (n - 1.0) * self.speed_sum() / n).max(0.0)
    }

    #[must_use]
    pub fn updates_since_refresh(&self) -> u64 {
        self.updates
    }

    fn set(&mut self, i: usize, speed: f64) {
        let delta = speed - self.speeds[i];
        self.speeds[i] = speed;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Index `i` with prefix sum `sum_{k<=i} s_k > u`.
    fn find(&self, mut u: f64) -> usize {
        let n = self.speeds.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }

    /// One thinned proposal; `Some((i, j))` if accepted.
    pub fn propose<R: Rng + ?Sized>(&self, state: &ParticleState, rng: &mut R) -> Option<(usize, usize)> {
        let n = self.speeds.len();
        let i = self.find(rng.random::<f64>() * self.speed_sum());
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let bound = self.speeds[i] + self.speeds[j];
        let r = dist(state.velocity(i), state.velocity(j));
        (rng.random::<f64>() * bound < r).then_some((i, j))
    }

    /// Records the new speeds of `i` and `j` after a collision.
    pub fn update(&mut self, state: &ParticleState, i: usize, j: usize) {
        self.set(i, norm_sq(state.velocity(i)).sqrt());
        self.set(j, norm_sq(state.velocity(j)).sqrt());
        self.updates += 1;
    }

    /// Rebuilds the tree from the current state; returns the relative drift
    /// of the speed sum that was removed.
    pub fn refresh(&mut self, state: &ParticleState) -> f64 {
        let before = self.speed_sum();
        self.speeds = state.velocities().map(|v| norm_sq(v).sqrt()).collect();
        self.rebuild();
        let after = self.speed_sum();
        (before - after).abs() / after.max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn state(rows: &[[f64; 2]]) -> ParticleState {
        ParticleState::from_flat(2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn prefix_search_matches_linear_scan() {
        let s = state(&[[1.0, 0.0], [0.0, 2.0], [0.0, 0.0], [3.0, 4.0], [-0.5, 0.0]]);
        let idx = SpeedIndex::from_state(&s);
        assert!((idx.speed_sum() - 8.5).abs() < 1e-12);
        let cases = [(0.0, 0), (0.99, 0), (1.0, 1), (2.9, 1), (3.0, 3), (7.9, 3), (8.0, 4), (8.49, 4)];
        for (u, want) in cases {
            assert_eq!(idx.find(u), want, "u = {u}");
        }
    }

    #[test]
    fn point_update_keeps_sum() {
        let mut s = state(&[[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]]);
        let mut idx = SpeedIndex::from_state(&s);
        s.velocity_mut(1).copy_from_slice(&[0.0, -7.0]);
        s.velocity_mut(2).copy_from_slice(&[0.0, 0.0]);
        idx.update(&s, 1, 2);
        assert!((idx.speed_sum() - 8.0).abs() < 1e-12);
        assert!(idx.refresh(&s) < 1e-15);
    }

    #[test]
    fn accepted_pairs_follow_relative_speed() {
        let s = state(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0], [0.5, 0.5]]);
        let idx = SpeedIndex::from_state(&s);
        let n = s.len();
        let mut weights = vec![vec![0.0; n]; n];
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                weights[i][j] = dist(s.velocity(i), s.velocity(j));
                total += weights[i][j];
            }
        }
        let mut rng = stream(11, 0, 0);
        let mut counts = vec![vec![0u64; n]; n];
        let mut accepted = 0u64;
        while accepted < 200_000 {
            if let Some((i, j)) = idx.propose(&s, &mut rng) {
                counts[i.min(j)][i.max(j)] += 1;
                accepted += 1;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let p = weights[i][j] / total;
                let se = (p * (1.0 - p) / accepted as f64).sqrt();
                let freq = counts[i][j] as f64 / accepted as f64;
                assert!((freq - p).abs() < 4.0 * se, "pair ({i},{j}): {freq} vs {p}");
            }
        }
    }
}
