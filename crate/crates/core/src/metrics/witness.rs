//! Certified lower bounds from subsampled dual solutions.

use rand::Rng;

use crate::error::{check_dim, KacError, Result};
use crate::kinetic::{dist, norm_sq};
use crate::measure::WeightedPointCloud;

use super::lp::{wasserstein_lp_with, DualWitness, LpOptions, DEFAULT_LP_CAP};

/// Output of [`wasserstein_lower_witness`].
#[derive(Clone, Debug)]
pub struct LowerWitness {
    /// `|<(1 + |v|^2) g, mu - nu>|` for the extended witness `g`.
    pub value: f64,
    /// Oriented so that its objective is `+value`.
    pub witness: DualWitness,
    /// Atoms of `mu` and `nu` used in the reduced solve.
    pub sample_sizes: (usize, usize),
    /// Whether the full joint support fitted in the sample.
    pub exact: bool,
}

/// Lower bound on `W(mu, nu)`.
///
/// Each cloud is subsampled in proportion to its support size. The exact
/// problem is solved twice on the sampled points: once with the sampled
/// weights, once with every atom's mass moved to its nearest sampled point.
/// Each optimal test function is extended to all of velocity space and
/// integrated against the full clouds, and the larger value is kept.
/// The extension stays in the admissible class, so the result never exceeds
/// the true distance.
///
/// # Errors
///
/// `sample_size` above the LP cap or below 2, mismatched dimensions, solver failure.
pub fn wasserstein_lower_witness<R: Rng + ?Sized>(
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    sample_size: usize,
    rng: &mut R,
) -> Result<LowerWitness> {
    check_dim(mu.dim(), nu.dim())?;
    if sample_size > DEFAULT_LP_CAP {
        return Err(KacError::SupportCapExceeded { size: sample_size, cap: DEFAULT_LP_CAP });
    }
    if sample_size < 2 {
        return Err(KacError::InvalidArgument("witness sample size must be at least 2".into()));
    }
    let opts = LpOptions { cap: usize::MAX };
    let joint = mu.add_scaled(nu, -1.0)?.len();
    if joint <= sample_size {
        let r = wasserstein_lp_with(mu, nu, &opts)?;
        return Ok(LowerWitness {
            value: r.dual_value.max(0.0),
            witness: r.witness,
            sample_sizes: (mu.len(), nu.len()),
            exact: true,
        });
    }
    let (a, b) = (mu.len(), nu.len());
    let ka = if a == 0 { 0 } else { ((sample_size as f64 * a as f64 / (a + b) as f64).round() as usize).clamp(1, a) };
    let kb = (sample_size - ka.min(sample_size)).min(b);
    let sub_mu = mu.subsample(ka, rng);
    let sub_nu = nu.subsample(kb, rng);
    let plain = wasserstein_lp_with(&sub_mu, &sub_nu, &opts)?.witness;
    let mut anchors = sub_mu.points_flat().to_vec();
    anchors.extend_from_slice(sub_nu.points_flat());
    let aggregated = wasserstein_lp_with(&aggregate(mu, &anchors), &aggregate(nu, &anchors), &opts)?.witness;
    let heavy = |c: &WeightedPointCloud| c.reweighted(|x| 1.0 + norm_sq(x));
    let mut tails = heavy(mu).subsample(ka, rng).points_flat().to_vec();
    tails.extend_from_slice(heavy(nu).subsample(kb, rng).points_flat());
    let weighted = wasserstein_lp_with(&aggregate(mu, &tails), &aggregate(nu, &tails), &opts)?.witness;
    let (witness, val) = [plain, aggregated, weighted]
        .into_iter()
        .map(|w| {
            let v = w.objective(mu, nu);
            if v < 0.0 {
                (w.negated(), -v)
            } else {
                (w, v)
            }
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates");
    let empty = DualWitness::new(mu.dim(), Vec::new(), Vec::new());
    let restarts = if a + b <= REFINE_BUDGET { REFINE_RESTARTS } else { 0 };
    let mut candidates = vec![refine(&witness, mu, nu, false, &[])];
    if restarts > 0 {
        candidates.push(refine(&empty, mu, nu, false, &[]));
        candidates.push(refine(&empty, mu, nu, true, &[]));
    }
    for _ in 0..restarts {
        let jitter: Vec<f64> = (0..a + b).map(|_| (rng.random::<f64>() - 0.5).exp()).collect();
        candidates.push(refine(&empty, mu, nu, true, &jitter));
    }
    let (witness, val) = candidates
        .into_iter()
        .map(|w| {
            let v = w.objective(mu, nu);
            (w, v)
        })
        .fold((witness, val), |best, c| if c.1 > best.1 { c } else { best });
    Ok(LowerWitness { value: val, witness, sample_sizes: (sub_mu.len(), sub_nu.len()), exact: false })
}

/// Largest number of atoms fixed one by one in [`refine`].
pub const REFINE_BUDGET: usize = 4096;

/// Randomised greedy orders tried when the whole joint support fits the
/// budget.
const REFINE_RESTARTS: usize = 6;

/// Fixes the heaviest atoms of `mu - nu` one at a time, each at the end of
/// its admissible interval that favours its sign. Every new value lies
/// between the lower and upper extensions of the points fixed so far, so the
/// enlarged witness stays bounded and 1-Lipschitz.
///
/// With `isolation`, atoms far from any atom of the opposite sign go first.
/// `jitter` multiplies the ordering keys.
fn refine(
    w: &DualWitness,
    mu: &WeightedPointCloud,
    nu: &WeightedPointCloud,
    isolation: bool,
    jitter: &[f64],
) -> DualWitness {
    let d = mu.dim();
    let mut atoms: Vec<(f64, &[f64], f64)> = mu
        .iter()
        .chain(nu.iter().map(|(x, m)| (x, -m)))
        .enumerate()
        .map(|(k, (x, m))| (m.abs() * (1.0 + norm_sq(x)) * jitter.get(k).copied().unwrap_or(1.0), x, m))
        .collect();
    atoms.sort_by(|p, q| q.0.total_cmp(&p.0));
    atoms.truncate(REFINE_BUDGET);
    if isolation {
        let gaps: Vec<f64> = atoms
            .iter()
            .map(|&(_, x, m)| atoms.iter().filter(|a| a.2 * m < 0.0).map(|a| dist(x, a.1)).fold(2.0_f64, f64::min))
            .collect();
        for (a, g) in atoms.iter_mut().zip(gaps) {
            a.0 *= g;
        }
        atoms.sort_by(|p, q| q.0.total_cmp(&p.0));
    }
    let mut points = Vec::with_capacity((w.len() + atoms.len()) * d);
    let mut values = w.values().to_vec();
    for k in 0..w.len() {
        points.extend_from_slice(w.point(k));
    }
    for (_, x, m) in atoms {
        let (hi, lo) = interval(d, &points, &values, x);
        points.extend_from_slice(x);
        values.push(if m > 0.0 { hi } else { lo.min(hi) });
    }
    DualWitness::new(d, points, values)
}

/// Range of values at `x` compatible with the stored points.
fn interval(d: usize, points: &[f64], values: &[f64], x: &[f64]) -> (f64, f64) {
    let (mut hi, mut lo) = (1.0_f64, -1.0_f64);
    for (p, g) in points.chunks_exact(d).zip(values) {
        let r = dist(p, x);
        hi = hi.min(g + r);
        lo = lo.max(g - r);
    }
    (hi, lo)
}

/// Moves every atom onto its nearest anchor, keeping `(1 + |v|^2) w` fixed.
fn aggregate(mu: &WeightedPointCloud, anchors: &[f64]) -> WeightedPointCloud {
    let d = mu.dim();
    let mut w = vec![0.0; anchors.len() / d];
    for (x, wx) in mu.iter() {
        let (k, _) = anchors
            .chunks_exact(d)
            .map(|a| dist(a, x))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty anchors");
        let a = &anchors[k * d..(k + 1) * d];
        w[k] += wx * (1.0 + norm_sq(x)) / (1.0 + norm_sq(a));
    }
    WeightedPointCloud::new(d, anchors.to_vec(), w).expect("finite weights").without_zero_atoms()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::Maxwellian;
    use crate::metrics::wasserstein_lp_with;
    use crate::rng::stream;

    fn gaussian_cloud(n: usize, shift: f64, seed: u64) -> WeightedPointCloud {
        let m = Maxwellian::new(3).unwrap();
        let mut rng = stream(seed, 0, 0);
        let mut pts = Vec::new();
        for _ in 0..n {
            let mut v = m.sample(&mut rng).0;
            v[0] += shift;
            pts.extend(v);
        }
        WeightedPointCloud::uniform(3, pts).unwrap()
    }

    #[test]
    fn full_support_equals_exact() {
        let mu = gaussian_cloud(30, 0.0, 1);
        let nu = gaussian_cloud(30, 0.5, 2);
        let mut rng = stream(3, 0, 0);
        let lw = wasserstein_lower_witness(&mu, &nu, 100, &mut rng).unwrap();
        let exact = wasserstein_lp_with(&mu, &nu, &LpOptions::default()).unwrap();
        assert!(lw.exact);
        assert!((lw.value - exact.value).abs() < 1e-9);
        let same = wasserstein_lower_witness(&mu, &mu, 100, &mut rng).unwrap();
        assert!(same.value.abs() < 1e-15);
    }

    #[test]
    fn subsampled_bound_is_below_exact() {
        let mu = gaussian_cloud(300, 0.0, 4);
        let nu = gaussian_cloud(300, 0.3, 5);
        let exact = wasserstein_lp_with(&mu, &nu, &LpOptions { cap: 1000 }).unwrap().value;
        let mut rng = stream(6, 0, 0);
        let lw = wasserstein_lower_witness(&mu, &nu, 100, &mut rng).unwrap();
        assert!(!lw.exact);
        assert!(lw.value <= exact + 1e-12);
        assert!(lw.value > 0.0);
        assert!(lw.witness.max_violation() <= 1e-12);
    }
}
