use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, KacError, Result};
use crate::kinetic::{dist, norm_sq};
use crate::measure::WeightedPointCloud;
use crate::rng::{stream, tags};
use crate::stats::Estimate;

use super::environment::Environment;
use super::tree::{run_tree, TreeBuffers, DEFAULT_POPULATION_CAP};

/// Largest tolerated fraction of discarded trees.
pub const MAX_DISCARD_FRACTION: f64 = 0.01;

/// Tree-sampling settings shared by the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub n_trees: usize,
    pub population_cap: usize,
}

impl TreeOptions {
    #[must_use]
    pub fn new(n_trees: usize) -> Self {
        Self { n_trees, population_cap: DEFAULT_POPULATION_CAP }
    }
}

/// Monte Carlo value of a propagated test function at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FstEstimate {
    pub v0: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub estimate: Estimate,
    pub n_trees: usize,
    pub discarded: usize,
    pub discard_fraction: f64,
    /// Set when more than [`MAX_DISCARD_FRACTION`] of the trees hit the cap.
    pub flagged: bool,
}

fn check_common(env: &Environment, v0: &[f64], s: f64, t: f64, n_trees: usize) -> Result<()> {
    check_dim(env.dim(), v0.len())?;
    env.check_range(s, t)?;
    if n_trees < 2 {
        return Err(KacError::InvalidArgument(format!("need at least 2 trees, got {n_trees}")));
    }
    Ok(())
}

/// Runs `n_trees` trees from `(v0, +1)` on `[s, t]` and returns, per tree,
/// `<f_m, Xi_t>` for every function, or `None` for a discarded tree.
fn tree_values<F: Fn(&[f64]) -> f64 + Sync>(
    env: &Environment,
    v0: &[f64],
    s: f64,
    t: f64,
    opts: TreeOptions,
    fs: &[F],
    seed: u64,
) -> Vec<Option<Vec<f64>>> {
    let d = v0.len();
    (0..opts.n_trees)
        .into_par_iter()
        .map_init(TreeBuffers::default, |buf, k| {
            let mut rng = stream(seed, k as u64, tags::TREE);
            let out = run_tree(env, v0, 1.0, s, t, opts.population_cap, &mut rng, buf);
            if out.truncated {
                return None;
            }
            Some(fs.iter().map(|f| buf.leaves(d).map(|(v, sg)| sg * f(v)).sum()).collect())
        })
        .collect()
}

fn summarize(v0: &[f64], s: f64, t: f64, n_trees: usize, column: &[f64]) -> FstEstimate {
    let discarded = n_trees - column.len();
    let discard_fraction = discarded as f64 / n_trees as f64;
    FstEstimate {
        v0: v0.to_vec(),
        s,
        t,
        estimate: Estimate::from_samples(column),
        n_trees,
        discarded,
        discard_fraction,
        flagged: discard_fraction > MAX_DISCARD_FRACTION,
    }
}

/// Estimates `f_{st}(v0) = E <f, Xi_t>` for several functions on the same
/// trees.
///
/// # Errors
///
/// Dimension mismatch, an uncovered time range, or fewer than two trees.
pub fn estimate_fst_many<F, R>(
    fs: &[F],
    v0: &[f64],
    s: f64,
    t: f64,
    env: &Environment,
    opts: TreeOptions,
    rng: &mut R,
) -> Result<Vec<FstEstimate>>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    check_common(env, v0, s, t, opts.n_trees)?;
    let seed = rng.next_u64();
    let rows: Vec<Vec<f64>> = tree_values(env, v0, s, t, opts, fs, seed).into_iter().flatten().collect();
    Ok((0..fs.len())
        .map(|m| {
            let column: Vec<f64> = rows.iter().map(|r| r[m]).collect();
            summarize(v0, s, t, opts.n_trees, &column)
        })
        .collect())
}

/// Estimates `f_{st}(v0)` for one function.
///
/// # Errors
///
/// As [`estimate_fst_many`].
pub fn estimate_fst<F, R>(
    f: F,
    v0: &[f64],
    s: f64,
    t: f64,
    env: &Environment,
    opts: TreeOptions,
    rng: &mut R,
) -> Result<FstEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    Ok(estimate_fst_many(&[f], v0, s, t, env, opts, rng)?.remove(0))
}

/// Outcome of the non-explosion check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    /// Estimate of `E <1 + |v|^2, |Xi_t|>`.
    pub weighted_mass: Estimate,
    /// `(1 + |v0|^2) exp(8 int_0^t Lambda_3)`.
    pub bound: f64,
    pub discarded: usize,
    pub holds: bool,
}

/// One-sided check of `E <1 + |v|^2, |Xi_t|> <= (1 + |v0|^2) exp(8 int Lambda_3)`
/// within three standard errors, trees started at the environment start.
///
/// # Errors
///
/// As [`estimate_fst_many`].
pub fn growth_bound_check<R: Rng + ?Sized>(
    v0: &[f64],
    t: f64,
    env: &Environment,
    opts: TreeOptions,
    rng: &mut R,
) -> Result<GrowthCheck> {
    let s = env.start();
    check_common(env, v0, s, t, opts.n_trees)?;
    let seed = rng.next_u64();
    let d = v0.len();
    let rows: Vec<Option<f64>> = (0..opts.n_trees)
        .into_par_iter()
        .map_init(TreeBuffers::default, |buf, k| {
            let mut rng = stream(seed, k as u64, tags::TREE);
            let out = run_tree(env, v0, 1.0, s, t, opts.population_cap, &mut rng, buf);
            (!out.truncated).then(|| buf.leaves(d).map(|(v, _)| 1.0 + norm_sq(v)).sum())
        })
        .collect();
    let kept: Vec<f64> = rows.iter().flatten().copied().collect();
    let weighted_mass = Estimate::from_samples(&kept);
    let bound = (1.0 + norm_sq(v0)) * (8.0 * env.lambda3_integral(s, t)?).exp();
    let se = if weighted_mass.se.is_finite() { weighted_mass.se } else { 0.0 };
    Ok(GrowthCheck {
        holds: weighted_mass.mean <= bound * (1.0 + 1e-12) + 3.0 * se,
        weighted_mass,
        bound,
        discarded: opts.n_trees - kept.len(),
    })
}

/// Size and slope of `v -> value / (1 + |v|^2)` on a mesh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzProfile {
    pub sup_norm: f64,
    pub lipschitz: f64,
}

/// Empirical sup norm and largest pairwise slope of the weight-normalised
/// values `values[k] / (1 + |mesh_k|^2)`.
///
/// # Errors
///
/// Length mismatch between mesh and values, or an empty mesh.
pub fn lipschitz_profile(dim: usize, mesh: &[f64], values: &[f64]) -> Result<LipschitzProfile> {
    if dim == 0 || mesh.len() != dim * values.len() {
        return Err(KacError::InvalidArgument(format!(
            "mesh of {} coordinates does not match {} values in dimension {dim}",
            mesh.len(),
            values.len()
        )));
    }
    if values.is_empty() {
        return Err(KacError::EmptyMeasure);
    }
    let pts: Vec<&[f64]> = mesh.chunks_exact(dim).collect();
    let g: Vec<f64> = pts.iter().zip(values).map(|(p, v)| v / (1.0 + norm_sq(p))).collect();
    let sup_norm = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut lipschitz = 0.0_f64;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            let r = dist(pts[a], pts[b]);
            if r > 0.0 {
                lipschitz = lipschitz.max((g[a] - g[b]).abs() / r);
            }
        }
    }
    Ok(LipschitzProfile { sup_norm, lipschitz })
}

/// Monte Carlo flow derivative with the number of discarded runs.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowDerivative {
    pub cloud: WeightedPointCloud,
    pub runs: usize,
    pub discarded: usize,
}

/// Estimates `xi_t = E Xi_t` where `Xi_0` is a Poisson random measure with
/// positive particles of intensity `theta_plus` and negative particles of
/// intensity `theta_minus`. Trees run from the environment start.
///
/// Initial counts come from their own stream, so for a fixed seed the
/// conserved signed quantities of the result do not depend on `t`.
///
/// # Errors
///
/// Signed intensities, dimension mismatch, an uncovered range, or
/// `n_runs == 0`.
pub fn estimate_flow_derivative<R: Rng + ?Sized>(
    theta_plus: &WeightedPointCloud,
    theta_minus: &WeightedPointCloud,
    env: &Environment,
    t: f64,
    n_runs: usize,
    population_cap: usize,
    rng: &mut R,
) -> Result<FlowDerivative> {
    if !theta_plus.is_nonnegative() || !theta_minus.is_nonnegative() {
        return Err(KacError::SignedMeasure);
    }
    check_dim(env.dim(), theta_plus.dim())?;
    check_dim(env.dim(), theta_minus.dim())?;
    if n_runs == 0 {
        return Err(KacError::InvalidArgument("need at least one run".into()));
    }
    let s = env.start();
    env.check_range(s, t)?;
    let d = env.dim();
    let seed = rng.next_u64();
    let atoms: Vec<(&[f64], f64, f64)> = theta_plus
        .iter()
        .map(|(x, w)| (x, w, 1.0))
        .chain(theta_minus.iter().map(|(x, w)| (x, w, -1.0)))
        .filter(|(_, w, _)| *w > 0.0)
        .collect();
    let per_run: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n_runs)
        .into_par_iter()
        .map_init(TreeBuffers::default, |buf, r| {
            let mut counts_rng = stream(seed, r as u64, tags::POISSON);
            let mut tree_rng = stream(seed, r as u64, tags::TREE);
            let mut pts = Vec::new();
            let mut signs = Vec::new();
            for &(x, w, sg) in &atoms {
                let count = Poisson::new(w).map_or(0.0, |p| p.sample(&mut counts_rng)) as u64;
                for _ in 0..count {
                    let out = run_tree(env, x, sg, s, t, population_cap, &mut tree_rng, buf);
                    if out.truncated {
                        return None;
                    }
                    pts.extend_from_slice(&buf.leaves);
                    signs.extend_from_slice(&buf.signs);
                }
            }
            Some((pts, signs))
        })
        .collect();
    let kept = per_run.iter().flatten().count();
    let discarded = n_runs - kept;
    let scale = if kept > 0 { 1.0 / kept as f64 } else { 0.0 };
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (pts, signs) in per_run.into_iter().flatten() {
        points.extend(pts);
        weights.extend(signs.into_iter().map(|sg| sg * scale));
    }
    let cloud = if weights.is_empty() {
        WeightedPointCloud::empty(d)
    } else {
        WeightedPointCloud::new(d, points, weights)?.without_zero_atoms()
    };
    Ok(FlowDerivative { cloud, runs: n_runs, discarded })
}
