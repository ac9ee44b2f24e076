use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kac::{KacProcess, SamplerKind};
use crate::measure::WeightedPointCloud;
use crate::metrics::{dyadic_upper_bound, lambda_k, w1_ot, wasserstein_lower_witness, wasserstein_lp_with, LpOptions};
use crate::rng::{stream, tags};
use crate::stats::{weighted_line_fit, Estimate};

use super::init::{chaotic_init, sample_iid, InitialLaw};
use super::report::{Fit, StudyReport, Verdict};

/// How `W(mu^N_t, phi_t(mu_0))` is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceEstimator {
    /// Exact LP distance to a fresh `N`-point subsample of the pooled
    /// reference ensemble.
    #[default]
    SubsampleLp,
    /// Midpoint of the sampled lower witness and the dyadic upper bound
    /// against the full pooled reference, half-width folded into the SE.
    Bracket,
}

/// Settings for [`convergence_study`] and [`uniform_time_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub reference_n: usize,
    pub reference_runs: usize,
    pub init: InitialLaw,
    pub sampler: SamplerKind,
    pub estimator: DistanceEstimator,
    pub lp_cap: usize,
    /// Replicas per cell that also get the bracket diagnostics.
    pub bracket_replicas: usize,
    pub witness_sample: usize,
    pub dyadic_scales: u32,
    pub dyadic_depth: u32,
    pub fit_time: f64,
    pub slope_band: (f64, f64),
    pub uniform_ratio_max: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n_list: vec![128, 256, 512, 1024, 2048],
            times: vec![1.0],
            replicas: 200,
            reference_n: 16384,
            reference_runs: 8,
            init: InitialLaw::Maxwellian,
            sampler: SamplerKind::Auto,
            estimator: DistanceEstimator::SubsampleLp,
            lp_cap: 4096,
            bracket_replicas: 4,
            witness_sample: 100,
            dyadic_scales: 8,
            dyadic_depth: 8,
            fit_time: 1.0,
            slope_band: (-0.45, -0.20),
            uniform_ratio_max: 1.5,
        }
    }
}

impl ConvergenceConfig {
    /// The uniform-in-time setup: one `N`, times out to 20.
    #[must_use]
    pub fn uniform_time() -> Self {
        Self { n_list: vec![512], times: vec![1.0, 2.0, 5.0, 10.0, 20.0], ..Self::default() }
    }

    /// Every violated constraint, empty when valid.
    #[must_use]
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.dim < 2 {
            v.push(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.n_list.is_empty() {
            v.push("n_list is empty".into());
        }
        if let Some(n) = self.n_list.iter().find(|n| **n < 2) {
            v.push(format!("particle counts must be >= 2, got {n}"));
        }
        let max_n = self.n_list.iter().copied().max().unwrap_or(0);
        if self.reference_n < max_n {
            v.push(format!("reference_n {} is smaller than the largest N {max_n}", self.reference_n));
        }
        if self.reference_runs < 2 {
            v.push(format!("reference_runs must be >= 2, got {}", self.reference_runs));
        }
        if self.replicas < 2 {
            v.push(format!("replicas must be >= 2, got {}", self.replicas));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            v.push("times must be finite and >= 0".into());
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            v.push("times must increase strictly".into());
        }
        if self.estimator == DistanceEstimator::SubsampleLp && self.lp_cap < 2 * max_n {
            v.push(format!("lp_cap {} is below twice the largest N {max_n}", self.lp_cap));
        }
        if self.dyadic_scales < 1 {
            v.push("dyadic_scales must be >= 1".into());
        }
        if self.dyadic_depth < 2 {
            v.push("dyadic_depth must be >= 2".into());
        }
        if self.witness_sample < 2 {
            v.push("witness_sample must be >= 2".into());
        }
        v
    }

    fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KacError::Config(v))
        }
    }
}

/// Pooled large-`N` runs standing in for `phi_t(mu_0)` on a time grid.
#[derive(Clone, Debug)]
pub struct ReferenceEnsemble {
    pub dim: usize,
    pub times: Vec<f64>,
    pub runs: usize,
    pub run_size: usize,
    /// `pooled[k]` holds every run's velocities at `times[k]`, run by run.
    pub pooled: Vec<Vec<f64>>,
}

impl ReferenceEnsemble {
    /// # Errors
    ///
    /// Invalid sizes or times.
    pub fn build(
        law: &InitialLaw,
        dim: usize,
        run_size: usize,
        runs: usize,
        times: &[f64],
        sampler: SamplerKind,
        seed: u64,
    ) -> Result<Self> {
        let per_run: Vec<Vec<Vec<f64>>> = (0..runs)
            .into_par_iter()
            .map(|r| -> Result<Vec<Vec<f64>>> {
                let s0 = chaotic_init(law, run_size, dim, &mut stream(seed, r as u64, tags::REFERENCE_INIT))?;
                let mut p = KacProcess::new(s0, sampler, stream(seed, r as u64, tags::REFERENCE_DYNAMICS));
                times
                    .iter()
                    .map(|&t| {
                        p.advance_to(t, &mut ())?;
                        Ok(p.state().as_flat().to_vec())
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let pooled =
            (0..times.len()).map(|k| per_run.iter().flat_map(|run| run[k].iter().copied()).collect()).collect();
        Ok(Self { dim, times: times.to_vec(), runs, run_size, pooled })
    }

    /// Pooled empirical measure at time index `k`.
    ///
    /// # Errors
    ///
    /// Never for a built ensemble.
    pub fn cloud(&self, k: usize) -> Result<WeightedPointCloud> {
        WeightedPointCloud::uniform(self.dim, self.pooled[k].clone())
    }

    /// Uniform subsample without replacement of `m` pooled particles drawn
    /// from runs `runs.start..runs.end`.
    ///
    /// # Errors
    ///
    /// Never for `m` within the selected pool.
    pub fn subsample<R: Rng + ?Sized>(
        &self,
        k: usize,
        runs: std::ops::Range<usize>,
        m: usize,
        rng: &mut R,
    ) -> Result<WeightedPointCloud> {
        let d = self.dim;
        let lo = runs.start * self.run_size;
        let pool = (runs.end - runs.start) * self.run_size;
        let mut idx = sample_indices(rng, pool, m.min(pool)).into_vec();
        idx.sort_unstable();
        let mut pts = Vec::with_capacity(idx.len() * d);
        for i in idx {
            let at = (lo + i) * d;
            pts.extend_from_slice(&self.pooled[k][at..at + d]);
        }
        WeightedPointCloud::uniform(d, pts)
    }
}

pub(crate) fn replica_index(n: usize, r: usize) -> u64 {
    ((n as u64) << 32) | r as u64
}

struct ReplicaOutcome {
    w: Vec<f64>,
    half_width: Vec<f64>,
    lambda2: Vec<f64>,
    lambda4: Vec<f64>,
    bracket: Vec<Option<(f64, f64)>>,
}

fn run_replica(
    cfg: &ConvergenceConfig,
    reference: &ReferenceEnsemble,
    full: &[WeightedPointCloud],
    n: usize,
    r: usize,
    seed: u64,
) -> Result<ReplicaOutcome> {
    let idx = replica_index(n, r);
    let s0 = chaotic_init(&cfg.init, n, cfg.dim, &mut stream(seed, idx, tags::INIT))?;
    let mut p = KacProcess::new(s0, cfg.sampler, stream(seed, idx, tags::DYNAMICS));
    let mut rng = stream(seed, idx, tags::METRIC);
    let lp = LpOptions { cap: cfg.lp_cap };
    let mut out = ReplicaOutcome {
        w: Vec::new(),
        half_width: Vec::new(),
        lambda2: Vec::new(),
        lambda4: Vec::new(),
        bracket: Vec::new(),
    };
    for (k, &t) in cfg.times.iter().enumerate() {
        p.advance_to(t, &mut ())?;
        let mu = WeightedPointCloud::from_state(p.state());
        out.lambda2.push(lambda_k(&mu, 2.0)?);
        out.lambda4.push(lambda_k(&mu, 4.0)?);
        let bracket = if r < cfg.bracket_replicas || cfg.estimator == DistanceEstimator::Bracket {
            let lower = wasserstein_lower_witness(&mu, &full[k], cfg.witness_sample, &mut rng)?.value;
            let upper = dyadic_upper_bound(&mu, &full[k], cfg.dyadic_scales, cfg.dyadic_depth)?.upper;
            Some((lower, upper))
        } else {
            None
        };
        match cfg.estimator {
            DistanceEstimator::SubsampleLp => {
                let nu = reference.subsample(k, 0..reference.runs, n, &mut rng)?;
                out.w.push(wasserstein_lp_with(&mu, &nu, &lp)?.value);
                out.half_width.push(0.0);
            }
            DistanceEstimator::Bracket => {
                let (lo, hi) = bracket.expect("bracket computed above");
                out.w.push(0.5 * (lo + hi));
                out.half_width.push(0.5 * (hi - lo).max(0.0));
            }
        }
        out.bracket.push(if r < cfg.bracket_replicas { bracket } else { None });
    }
    Ok(out)
}

/// Estimates `E[W]` on the `(N, t)` grid; shared by the convergence and
/// uniform-in-time reports.
fn distance_grid(cfg: &ConvergenceConfig, seed: u64, report: &mut StudyReport) -> Result<Vec<Vec<Estimate>>> {
    cfg.validate()?;
    let reference = ReferenceEnsemble::build(
        &cfg.init,
        cfg.dim,
        cfg.reference_n,
        cfg.reference_runs,
        &cfg.times,
        cfg.sampler,
        seed,
    )?;
    let full: Vec<WeightedPointCloud> = (0..cfg.times.len()).map(|k| reference.cloud(k)).collect::<Result<_>>()?;
    let max_n = cfg.n_list.iter().copied().max().unwrap_or(2);
    let half = reference.runs / 2;
    for (k, &t) in cfg.times.iter().enumerate() {
        let mut rng = stream(seed, k as u64, tags::CALIBRATION);
        let a = reference.subsample(k, 0..half, max_n, &mut rng)?;
        let b = reference.subsample(k, half..reference.runs, max_n, &mut rng)?;
        let split = wasserstein_lp_with(&a, &b, &LpOptions { cap: cfg.lp_cap.max(2 * max_n) })?.value;
        report.push_value("reference_split_half", Some(max_n), Some(t), split);
    }
    let mut grid = Vec::with_capacity(cfg.n_list.len());
    let mut bracket_ok = true;
    for &n in &cfg.n_list {
        let outcomes: Vec<ReplicaOutcome> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| run_replica(cfg, &reference, &full, n, r, seed))
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(cfg.times.len());
        for (k, &t) in cfg.times.iter().enumerate() {
            let w: Vec<f64> = outcomes.iter().map(|o| o.w[k]).collect();
            let mut e = Estimate::from_samples(&w);
            let hw = outcomes.iter().map(|o| o.half_width[k]).sum::<f64>() / outcomes.len() as f64;
            e.se = e.se.hypot(hw);
            report.push_cell("w", Some(n), Some(t), &e);
            let l2: Vec<f64> = outcomes.iter().map(|o| o.lambda2[k]).collect();
            let l4: Vec<f64> = outcomes.iter().map(|o| o.lambda4[k]).collect();
            report.push_cell("lambda_2", Some(n), Some(t), &Estimate::from_samples(&l2));
            report.push_cell("lambda_4", Some(n), Some(t), &Estimate::from_samples(&l4));
            let br: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.bracket[k]).collect();
            if br.len() >= 2 {
                let lo: Vec<f64> = br.iter().map(|b| b.0).collect();
                let hi: Vec<f64> = br.iter().map(|b| b.1).collect();
                report.push_cell("bracket_lower", Some(n), Some(t), &Estimate::from_samples(&lo));
                report.push_cell("bracket_upper", Some(n), Some(t), &Estimate::from_samples(&hi));
            }
            bracket_ok &= br.iter().all(|(lo, hi)| lo <= hi);
            row.push(e);
        }
        grid.push(row);
    }
    report.verdicts.push(Verdict::within("bracket_ordered", if bracket_ok { 1.0 } else { 0.0 }, Some(1.0), None));
    Ok(grid)
}

/// Fitted slope of `log E[W]` against `log N` at `cfg.fit_time`, with the
/// other grid cells reported alongside.
///
/// # Errors
///
/// Invalid configuration, or `fit_time` not on the time grid.
pub fn convergence_study(cfg: &ConvergenceConfig, seed: u64) -> Result<StudyReport> {
    let k = cfg
        .times
        .iter()
        .position(|t| *t == cfg.fit_time)
        .ok_or_else(|| KacError::Config(vec![format!("fit_time {} is not in the time grid", cfg.fit_time)]))?;
    let mut report = StudyReport::new("convergence", seed, cfg);
    let grid = distance_grid(cfg, seed, &mut report)?;
    if cfg.n_list.len() >= 2 {
        let x: Vec<f64> = cfg.n_list.iter().map(|n| (*n as f64).ln()).collect();
        let y: Vec<f64> = grid.iter().map(|row| row[k].mean.ln()).collect();
        let s: Vec<f64> = grid.iter().map(|row| row[k].se / row[k].mean).collect();
        let fit = weighted_line_fit(&x, &y, &s);
        report.fits.push(Fit::new("log_w_vs_log_n", &fit));
        report.verdicts.push(Verdict::within(
            "slope_in_band",
            fit.slope,
            Some(cfg.slope_band.0),
            Some(cfg.slope_band.1),
        ));
    }
    Ok(report)
}

/// Ratio `max_t E[W] / E[W at the first time]` for each `N`.
///
/// # Errors
///
/// Invalid configuration.
pub fn uniform_time_study(cfg: &ConvergenceConfig, seed: u64) -> Result<StudyReport> {
    let mut report = StudyReport::new("uniform_time", seed, cfg);
    let grid = distance_grid(cfg, seed, &mut report)?;
    for (row, &n) in grid.iter().zip(&cfg.n_list) {
        let first = row[0].mean;
        let max = row.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
        report.push_value("w_ratio_max_over_first", Some(n), None, max / first);
        report.verdicts.push(Verdict::within(
            format!("uniform_ratio_n{n}"),
            max / first,
            None,
            Some(cfg.uniform_ratio_max),
        ));
    }
    Ok(report)
}

/// Settings for [`baseline_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub replicas: usize,
    pub init: InitialLaw,
    pub slope_band: (f64, f64),
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n_list: vec![128, 256, 512, 1024, 2048, 4096],
            replicas: 16,
            init: InitialLaw::Maxwellian,
            slope_band: (-1.0 / 3.0 - 0.1, -1.0 / 3.0 + 0.1),
        }
    }
}

/// `E[W_1(mu^N_0, mu_0)]` for chaotic initial data, each replica compared
/// with an independent `N`-point i.i.d. sample of `mu_0`.
///
/// # Errors
///
/// Invalid sizes.
pub fn baseline_study(cfg: &BaselineConfig, seed: u64) -> Result<StudyReport> {
    if cfg.replicas < 2 || cfg.n_list.len() < 2 || cfg.n_list.iter().any(|n| *n < 2) {
        return Err(KacError::Config(vec!["need >= 2 replicas and >= 2 particle counts, each >= 2".into()]));
    }
    let mut report = StudyReport::new("baseline", seed, cfg);
    let mut means = Vec::new();
    for &n in &cfg.n_list {
        let w: Vec<f64> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let idx = replica_index(n, r);
                let s0 = chaotic_init(&cfg.init, n, cfg.dim, &mut stream(seed, idx, tags::INIT))?;
                let target = sample_iid(&cfg.init, n, cfg.dim, &mut stream(seed, idx, tags::REFERENCE_INIT))?;
                w1_ot(&WeightedPointCloud::from_state(&s0), &WeightedPointCloud::uniform(cfg.dim, target)?)
            })
            .collect::<Result<_>>()?;
        let e = Estimate::from_samples(&w);
        report.push_cell("w1", Some(n), Some(0.0), &e);
        means.push(e);
    }
    let x: Vec<f64> = cfg.n_list.iter().map(|n| (*n as f64).ln()).collect();
    let y: Vec<f64> = means.iter().map(|e| e.mean.ln()).collect();
    let s: Vec<f64> = means.iter().map(|e| e.se / e.mean).collect();
    let fit = weighted_line_fit(&x, &y, &s);
    report.fits.push(Fit::new("log_w1_vs_log_n", &fit));
    report.verdicts.push(Verdict::within("slope_in_band", fit.slope, Some(cfg.slope_band.0), Some(cfg.slope_band.1)));
    Ok(report)
}
