//! Multiscale upper bound for the weighted distance.
//!
//! Velocity space is split into the cube `B_0 = (-1, 1]^d` and annuli
//! `A_j = B_j \ B_{j-1}` with `B_j = (-2^j, 2^j]^d`. At level `l >= 2` the
//! annulus `A_j` is tiled by the cubes of side `2^(j-l+1)` of the regular grid
//! on `B_j` that avoid `B_{j-1}`. A test function splits into a telescoping
//! sum of cell averages plus a remainder; bounding each average coefficient
//! and the remainder gives an upper bound computable from cell masses alone.
//!
//! Coefficient bounds: `1` at level 2 and `min(2, 2 sqrt(d) 2^(j-l))` below.
//! Remainder: `4 max(1, sqrt(d/3)) (2^-2J + 2^-L) (Lambda_4(|mu|) + Lambda_4(|nu|))`.

use std::collections::HashMap;

use crate::error::{check_dim, KacError, Result};
use crate::measure::WeightedPointCloud;

use super::moments::moment_weight;

/// Annuli `0..=J`, refined to levels `2..=L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DyadicPartition {
    dim: usize,
    scales: u32,
    depth: u32,
}

impl DyadicPartition {
    /// # Errors
    ///
    /// `J < 1`, `L < 2`, `dim == 0`, or `L > 30`.
    pub fn new(dim: usize, scales: u32, depth: u32) -> Result<Self> {
        if scales < 1 || depth < 2 || dim == 0 || depth > 30 || scales > 60 {
            return Err(KacError::InvalidArgument(format!(
                "dyadic partition needs J >= 1 and 2 <= L <= 30 (got J = {scales}, L = {depth})"
            )));
        }
        Ok(Self { dim, scales, depth })
    }

    /// Index `j` of the annulus containing `x`, or `None` beyond `B_J`.
    #[must_use]
    pub fn annulus(&self, x: &[f64]) -> Option<u32> {
        let mut j = 0u32;
        let mut r = 1.0f64;
        while !x.iter().all(|c| -r < *c && *c <= r) {
            j += 1;
            r *= 2.0;
            if j > self.scales {
                return None;
            }
        }
        Some(j)
    }

    /// Side length of level-`l` cells in annulus `j`.
    #[must_use]
    pub fn side(j: u32, l: u32) -> f64 {
        2f64.powi(j as i32 - l as i32 + 1)
    }

    /// Grid index of the level-`l` cell of annulus `j` containing `x`.
    #[must_use]
    pub fn cell(&self, x: &[f64], j: u32, l: u32) -> Vec<u32> {
        let s = Self::side(j, l);
        let r = 2f64.powi(j as i32);
        let top = (1u32 << l) - 1;
        x.iter()
            .map(|c| {
                let i = ((c + r) / s).ceil() - 1.0;
                (i.max(0.0) as u32).min(top)
            })
            .collect()
    }

    /// Number of level-`l` cells tiling annulus `j`.
    #[must_use]
    pub fn cell_count(&self, j: u32, l: u32) -> u64 {
        let d = self.dim as u32;
        let all = 1u64 << (l * d);
        if j == 0 {
            all
        } else {
            all - (1u64 << ((l - 1) * d))
        }
    }

    /// Whether grid cell `idx` of level `l` lies in annulus `j`
    /// (rather than inside `B_{j-1}`).
    #[must_use]
    pub fn cell_in_annulus(&self, idx: &[u32], j: u32, l: u32) -> bool {
        if j == 0 {
            return true;
        }
        // B_{j-1} occupies indices [2^(l-2), 3 * 2^(l-2)) in every coordinate.
        let lo = 1u32 << (l - 2);
        let hi = 3 * lo;
        !idx.iter().all(|i| (lo..hi).contains(i))
    }

    /// Bound on the coefficient of a level-`l` cell of annulus `j`.
    #[must_use]
    pub fn coefficient_bound(&self, j: u32, l: u32) -> f64 {
        if l == 2 {
            1.0
        } else {
            (2.0 * (self.dim as f64).sqrt() * 2f64.powi(j as i32 - l as i32)).min(2.0)
        }
    }

    /// Remainder constant.
    #[must_use]
    pub fn remainder_constant(&self) -> f64 {
        4.0 * (self.dim as f64 / 3.0).sqrt().max(1.0)
    }
}

/// Output of [`dyadic_upper_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicBound {
    /// Coefficient sum plus remainder.
    pub upper: f64,
    pub remainder: f64,
    /// Number of nonempty cells visited.
    pub cells: usize,
}

/// Upper bound on `W(mu, nu)` from the dyadic decomposition.
///
/// # Errors
///
/// Invalid `J`, `L`, or mismatched dimensions.
pub fn dyadic_upper_bound(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    scales: u32,
    depth: u32,
) -> Result<DyadicBound> {
    check_dim(mu.dim(), nu.dim())?;
    let part = DyadicPartition::new(mu.dim(), scales, depth)?;
    let mut mass: HashMap<Vec<u32>, f64> = HashMap::new();
    let mut deposit = |x: &[f64], w: f64| {
        let Some(j) = part.annulus(x) else { return };
        let c = moment_weight(x, 2.0) * w;
        for l in 2..=depth {
            let mut key = vec![j, l];
            key.extend(part.cell(x, j, l));
            *mass.entry(key).or_insert(0.0) += c;
        }
    };
    for (x, w) in mu.iter() {
        deposit(x, w);
    }
    for (x, w) in nu.iter() {
        deposit(x, -w);
    }
    let mut terms: Vec<(Vec<u32>, f64)> = mass.into_iter().collect();
    // Fixed summation order keeps the result reproducible.
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let coeff: f64 = terms.iter().map(|(k, m)| part.coefficient_bound(k[0], k[1]) * m.abs()).sum();
    let tails = mu.abs().integrate(|x| moment_weight(x, 4.0)) + nu.abs().integrate(|x| moment_weight(x, 4.0));
    let remainder = part.remainder_constant() * (2f64.powi(-2 * scales as i32) + 2f64.powi(-(depth as i32))) * tails;
    Ok(DyadicBound { upper: coeff + remainder, remainder, cells: terms.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::wasserstein_lp;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    /// Counts cells by enumerating the full grid and testing cell centres.
    fn enumerate_cells(d: usize, j: u32, l: u32) -> u64 {
        let part = DyadicPartition::new(d, 8, 8).unwrap();
        let n = 1u32 << l;
        let s = DyadicPartition::side(j, l);
        let r = 2f64.powi(j as i32);
        let mut count = 0;
        let mut idx = vec![0u32; d];
        loop {
            let centre: Vec<f64> = idx.iter().map(|i| -r + (f64::from(*i) + 0.5) * s).collect();
            if part.annulus(&centre) == Some(j) {
                count += 1;
                assert!(part.cell_in_annulus(&idx, j, l));
                assert_eq!(part.cell(&centre, j, l), idx);
            } else {
                assert!(!part.cell_in_annulus(&idx, j, l));
            }
            let mut k = 0;
            loop {
                if k == d {
                    return count;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn cell_counts_match_enumeration() {
        let part = DyadicPartition::new(3, 8, 8).unwrap();
        assert_eq!(part.cell_count(1, 2), 56);
        for (d, j, l) in [(3, 1, 2), (3, 0, 2), (3, 2, 3), (2, 3, 4), (2, 0, 3), (4, 1, 2)] {
            let p = DyadicPartition::new(d, 8, 8).unwrap();
            assert_eq!(p.cell_count(j, l), enumerate_cells(d, j, l), "d={d} j={j} l={l}");
        }
    }

    #[test]
    fn half_open_boundaries() {
        let part = DyadicPartition::new(2, 4, 4).unwrap();
        assert_eq!(part.annulus(&[1.0, 0.0]), Some(0));
        assert_eq!(part.annulus(&[-1.0, 0.0]), Some(1));
        assert_eq!(part.annulus(&[16.0, 0.0]), Some(4));
        assert_eq!(part.annulus(&[16.5, 0.0]), None);
        // Upper faces belong to the lower cell.
        assert_eq!(part.cell(&[0.0, 0.0], 0, 2), vec![1, 1]);
        assert_eq!(part.cell(&[0.5, -0.5], 0, 2), vec![2, 0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        let a = WeightedPointCloud::dirac(&[0.0, 0.0]);
        assert!(dyadic_upper_bound(&a, &a, 0, 4).is_err());
        assert!(dyadic_upper_bound(&a, &a, 2, 1).is_err());
    }

    #[test]
    fn equal_measures_leave_only_remainder() {
        let pts = vec![0.1, 0.2, 3.0, -1.0, -0.5, 0.5];
        let mu = WeightedPointCloud::uniform(2, pts).unwrap();
        let b = dyadic_upper_bound(&mu, &mu, 6, 6).unwrap();
        assert_eq!(b.upper, b.remainder);
        let lam4 = mu.integrate(|x| moment_weight(x, 4.0));
        let expected = 4.0 * (2f64.powi(-12) + 2f64.powi(-6)) * 2.0 * lam4;
        assert!((b.remainder - expected).abs() < 1e-12 * expected);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dominates_exact_value(seed in any::<u64>(), scale in 0.2f64..3.0) {
            let mut rng = stream(seed, 0, 0);
            let mut gen = |n: usize, shift: f64| {
                let pts: Vec<f64> = (0..3 * n).map(|_| scale * rng.random_range(-1.0..1.0) + shift).collect();
                WeightedPointCloud::uniform(3, pts).unwrap()
            };
            let mu = gen(20, 0.0);
            let nu = gen(20, 0.1);
            let exact = wasserstein_lp(&mu, &nu).unwrap().value;
            let b = dyadic_upper_bound(&mu, &nu, 8, 8).unwrap();
            prop_assert!(b.upper >= exact - 1e-12, "{} < {}", b.upper, exact);
        }
    }
}
