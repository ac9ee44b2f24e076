use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kac::{KacProcess, SamplerKind};
use crate::kinetic::{norm_sq, ParticleState};
use crate::measure::WeightedPointCloud;
use crate::metrics::w1_ot;
use crate::rng::{stream, tags};
use crate::stats::{line_fit, Estimate};

use super::convergence::replica_index;
use super::init::{chaotic_init, equilibrium_sample, nonchaotic_init, InitialLaw};
use super::report::{Fit, StudyReport, Verdict};

/// Initial data for the relaxation and chaos studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartingPoint {
    Chaotic { law: InitialLaw },
    Nonchaotic,
    Equilibrium,
}

impl StartingPoint {
    /// # Errors
    ///
    /// As the underlying constructor.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, dim: usize, rng: &mut R) -> Result<ParticleState> {
        match self {
            Self::Chaotic { law } => chaotic_init(law, n, dim, rng),
            Self::Nonchaotic => nonchaotic_init(n, dim, rng),
            Self::Equilibrium => equilibrium_sample(n, dim, rng),
        }
    }
}

/// Panel of test functions `(1 + |v|^2) g(v)` with `|g| <= 1`, `Lip(g) <= 1`.
#[must_use]
pub fn relaxation_panel() -> Vec<(&'static str, fn(&[f64]) -> f64)> {
    vec![
        ("cos_v1", |v| (1.0 + norm_sq(v)) * v[0].cos()),
        ("gauss", |v| (1.0 + norm_sq(v)) * (-0.5 * norm_sq(v)).exp()),
        ("min_speed", |v| (1.0 + norm_sq(v)) * norm_sq(v).sqrt().min(1.0)),
        ("cos_diag", |v| (1.0 + norm_sq(v)) * ((v[0] + v[1]) / std::f64::consts::SQRT_2).cos()),
    ]
}

/// Settings for [`relaxation_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationConfig {
    pub dim: usize,
    pub n: usize,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub start: StartingPoint,
    pub equilibrium_samples: usize,
    pub sampler: SamplerKind,
    /// Final discrepancy must lie within this many noise floors.
    pub floor_factor: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 64,
            times: vec![0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0],
            replicas: 400,
            start: StartingPoint::Nonchaotic,
            equilibrium_samples: 4000,
            sampler: SamplerKind::Auto,
            floor_factor: 3.0,
        }
    }
}

/// Panel means `E <f_i, mu^N_t>` against their equilibrium values; reports
/// the largest discrepancy per time, its noise floor and a fitted decay rate.
///
/// # Errors
///
/// Invalid sizes or times.
pub fn relaxation_study(cfg: &RelaxationConfig, seed: u64) -> Result<StudyReport> {
    if cfg.replicas < 2 || cfg.equilibrium_samples < 2 || cfg.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(KacError::Config(vec!["need >= 2 replicas and samples, strictly increasing times".into()]));
    }
    let mut report = StudyReport::new("relaxation", seed, cfg);
    let panel = relaxation_panel();
    let eval = |s: &ParticleState| -> Vec<f64> { panel.iter().map(|(_, f)| s.empirical_mean(f)).collect() };
    let eq: Vec<Vec<f64>> = (0..cfg.equilibrium_samples)
        .into_par_iter()
        .map(|r| Ok(eval(&equilibrium_sample(cfg.n, cfg.dim, &mut stream(seed, r as u64, tags::CALIBRATION))?)))
        .collect::<Result<_>>()?;
    let eq_est: Vec<Estimate> =
        (0..panel.len()).map(|m| Estimate::from_samples(&eq.iter().map(|row| row[m]).collect::<Vec<_>>())).collect();
    let runs: Vec<Vec<Vec<f64>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let idx = replica_index(cfg.n, r);
            let s0 = cfg.start.sample(cfg.n, cfg.dim, &mut stream(seed, idx, tags::INIT))?;
            let mut p = KacProcess::new(s0, cfg.sampler, stream(seed, idx, tags::DYNAMICS));
            cfg.times
                .iter()
                .map(|&t| {
                    p.advance_to(t, &mut ())?;
                    Ok(eval(p.state()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut decay = Vec::new();
    let mut last = (0.0, 0.0);
    for (k, &t) in cfg.times.iter().enumerate() {
        let mut disc = 0.0_f64;
        let mut floor = 0.0_f64;
        for (m, (name, _)) in panel.iter().enumerate() {
            let e = Estimate::from_samples(&runs.iter().map(|run| run[k][m]).collect::<Vec<_>>());
            report.push_cell(name, Some(cfg.n), Some(t), &e);
            disc = disc.max((e.mean - eq_est[m].mean).abs());
            floor = floor.max(e.combined_se(&eq_est[m]));
        }
        report.push_value("discrepancy", Some(cfg.n), Some(t), disc);
        report.push_value("noise_floor", Some(cfg.n), Some(t), floor);
        if disc > cfg.floor_factor * floor {
            decay.push((t, disc.ln()));
        }
        last = (disc, floor);
    }
    for (m, (name, _)) in panel.iter().enumerate() {
        report.push_cell(&format!("equilibrium_{name}"), Some(cfg.n), None, &eq_est[m]);
    }
    if decay.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = decay.into_iter().unzip();
        report.fits.push(Fit::new("log_discrepancy_vs_t", &line_fit(&x, &y)));
    }
    report.verdicts.push(Verdict::within("final_at_noise_floor", last.0 / last.1, None, Some(cfg.floor_factor)));
    Ok(report)
}

/// Settings for [`chaos_diagnostic`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosConfig {
    pub dim: usize,
    pub n_list: Vec<usize>,
    pub t: f64,
    pub replicas: usize,
    pub start: StartingPoint,
    /// Points per cloud handed to the transport solver.
    pub subsample: usize,
    pub sampler: SamplerKind,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n_list: vec![64, 256, 1024],
            t: 1.0,
            replicas: 2000,
            start: StartingPoint::Chaotic { law: InitialLaw::Maxwellian },
            subsample: 500,
            sampler: SamplerKind::Auto,
        }
    }
}

/// `W_1` in `R^{2d}` between the law of `(v_1(t), v_2(t))` and the product
/// of its marginals. Replicas are split in halves: the joint cloud comes
/// from the first half, products pair particle 1 of one replica with
/// particle 2 of the next. The noise floor compares the products of both
/// halves.
///
/// # Errors
///
/// Fewer than 4 replicas or invalid sizes.
pub fn chaos_diagnostic(cfg: &ChaosConfig, seed: u64) -> Result<StudyReport> {
    if cfg.replicas < 4 || cfg.subsample < 2 {
        return Err(KacError::Config(vec!["need >= 4 replicas and subsample >= 2".into()]));
    }
    let mut report = StudyReport::new("chaos", seed, cfg);
    let d = cfg.dim;
    for &n in &cfg.n_list {
        let pairs: Vec<Vec<f64>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| -> Result<Vec<f64>> {
                let idx = replica_index(n, r);
                let s0 = cfg.start.sample(n, d, &mut stream(seed, idx, tags::INIT))?;
                let mut p = KacProcess::new(s0, cfg.sampler, stream(seed, idx, tags::DYNAMICS));
                p.advance_to(cfg.t, &mut ())?;
                Ok([p.state().velocity(0), p.state().velocity(1)].concat())
            })
            .collect::<Result<_>>()?;
        let half = (cfg.replicas / 2).min(cfg.subsample);
        let (a, b) = pairs.split_at(cfg.replicas / 2);
        let joint = |set: &[Vec<f64>]| WeightedPointCloud::uniform(2 * d, set[..half].concat());
        let product = |set: &[Vec<f64>]| {
            let mut pts = Vec::with_capacity(half * 2 * d);
            for r in 0..half {
                pts.extend_from_slice(&set[r][..d]);
                pts.extend_from_slice(&set[(r + 1) % set.len()][d..]);
            }
            WeightedPointCloud::uniform(2 * d, pts)
        };
        let diag = w1_ot(&joint(a)?, &product(b)?)?;
        let floor = w1_ot(&product(a)?, &product(b)?)?;
        report.push_value("diagnostic", Some(n), Some(cfg.t), diag);
        report.push_value("noise_floor", Some(n), Some(cfg.t), floor);
    }
    Ok(report)
}
