use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::measure::WeightedPointCloud;
use crate::metrics::{wasserstein_lp_with, LpOptions};
use crate::rng::{derive_seed, stream, tags};
use crate::stats::Estimate;

use super::convergence::replica_index;
use super::init::{nonchaotic_init, sphere_design};
use super::report::{StudyReport, Verdict};

/// Settings for [`nonchaotic_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonchaoticConfig {
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub design_points: usize,
    /// Independent draws of the base direction per `N`.
    pub replicas: usize,
    /// The confirmation sweep must stay above `ratio` times the first
    /// sweep's minimum.
    pub ratio: f64,
    pub lp_cap: usize,
}

impl Default for NonchaoticConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n_list: vec![8, 16, 32, 64, 128, 256, 512],
            design_points: 2000,
            replicas: 16,
            ratio: 0.9,
            lp_cap: 4096,
        }
    }
}

fn sweep(cfg: &NonchaoticConfig, target: &WeightedPointCloud, seed: u64) -> Result<Vec<Estimate>> {
    let lp = LpOptions { cap: cfg.lp_cap };
    cfg.n_list
        .iter()
        .map(|&n| {
            let w: Vec<f64> = (0..cfg.replicas)
                .into_par_iter()
                .map(|r| {
                    let s = nonchaotic_init(n, cfg.dim, &mut stream(seed, replica_index(n, r), tags::INIT))?;
                    Ok(wasserstein_lp_with(&WeightedPointCloud::from_state(&s), target, &lp)?.value)
                })
                .collect::<Result<_>>()?;
            Ok(Estimate::from_samples(&w))
        })
        .collect()
}

/// Distance from non-chaotic initial data to the uniform law on the sphere
/// across `N`: a first sweep fixes `delta = min_N E[W]`, an independent second
/// sweep must stay above `ratio * delta` for every `N`.
///
/// # Errors
///
/// Invalid sizes, or `N` not a multiple of `2^d`.
pub fn nonchaotic_study(cfg: &NonchaoticConfig, seed: u64) -> Result<StudyReport> {
    if cfg.replicas < 2 || cfg.n_list.is_empty() {
        return Err(KacError::Config(vec!["need >= 2 replicas and a non-empty n_list".into()]));
    }
    let mut report = StudyReport::new("nonchaotic", seed, cfg);
    let target = sphere_design(cfg.dim, cfg.design_points, &mut stream(seed, 0, tags::CALIBRATION))?;
    let first = sweep(cfg, &target, seed)?;
    let second = sweep(cfg, &target, derive_seed(seed, 1, tags::CALIBRATION))?;
    for ((n, a), b) in cfg.n_list.iter().zip(&first).zip(&second) {
        report.push_cell("w_first", Some(*n), Some(0.0), a);
        report.push_cell("w_second", Some(*n), Some(0.0), b);
    }
    let delta = first.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
    let worst = second.iter().map(|e| e.mean).fold(f64::INFINITY, f64::min);
    report.push_value("delta_hat", None, Some(0.0), delta);
    report.verdicts.push(Verdict::within("delta_positive", delta, Some(f64::MIN_POSITIVE), None));
    report.verdicts.push(Verdict::within("second_sweep_min", worst, Some(cfg.ratio * delta), None));
    Ok(report)
}
