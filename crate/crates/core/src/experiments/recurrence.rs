use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kac::{CollisionObserver, CollisionRecord, KacProcess, SamplerKind};
use crate::rng::{stream, tags};
use crate::stats::{quantile, Estimate};

use super::init::{concentration_function, equilibrium_sample};
use super::report::{StudyReport, Verdict};

/// Settings for [`recurrence_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceConfig {
    pub dim: usize,
    pub n: usize,
    pub calibration_samples: usize,
    /// Target occupation `p` of the region `<f, mu> > theta`.
    pub target_p: f64,
    pub events: u64,
    /// Each half-window occupation must lie in `[p / band, band * p]`.
    pub band_factor: f64,
    /// Batches per half-window for the batch-means standard error.
    pub batches: usize,
    pub sampler: SamplerKind,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 4,
            calibration_samples: 1_000_000,
            target_p: 0.01,
            events: 10_000_000,
            band_factor: 2.0,
            batches: 20,
            sampler: SamplerKind::RowSums,
        }
    }
}

/// Follows `sum_i f(v_i)` through collisions and records the time spans
/// during which `<f, mu>` exceeds the threshold.
struct Occupation<F> {
    f: F,
    n: f64,
    sum: f64,
    threshold: f64,
    since: Option<f64>,
    spans: Vec<(f64, f64)>,
}

impl<F: Fn(&[f64]) -> f64> Occupation<F> {
    fn reset(&mut self, sum: f64, time: f64) {
        let above = sum / self.n > self.threshold;
        match (self.since, above) {
            (None, true) => self.since = Some(time),
            (Some(s), false) => {
                self.spans.push((s, time));
                self.since = None;
            }
            _ => {}
        }
        self.sum = sum;
    }
}

impl<F: Fn(&[f64]) -> f64> CollisionObserver for Occupation<F> {
    fn on_collision(&mut self, r: &CollisionRecord<'_>) {
        let f = &self.f;
        let sum = self.sum + f(r.after[0]) + f(r.after[1]) - f(r.before[0]) - f(r.before[1]);
        self.reset(sum, r.time);
    }
}

/// Time spent inside `spans` during `[a, b)`.
fn overlap(spans: &[(f64, f64)], a: f64, b: f64) -> f64 {
    spans.iter().map(|&(s, e)| (e.min(b) - s.max(a)).max(0.0)).sum()
}

/// Calibrates `theta` as the `1 - p` quantile of `<f, mu>` at equilibrium,
/// then measures the time-averaged occupation of `<f, mu_t> > theta` along one
/// long trajectory started at equilibrium, in two half-windows.
///
/// # Errors
///
/// Invalid sizes.
pub fn recurrence_study(cfg: &RecurrenceConfig, seed: u64) -> Result<StudyReport> {
    if !(cfg.target_p > 0.0 && cfg.target_p < 1.0) || cfg.calibration_samples < 2 || cfg.events == 0 || cfg.batches == 0
    {
        return Err(KacError::Config(vec!["need 0 < target_p < 1 and positive sample counts".into()]));
    }
    let mut report = StudyReport::new("recurrence", seed, cfg);
    let f = concentration_function(cfg.n);
    const CHUNK: usize = 10_000;
    let chunks = cfg.calibration_samples.div_ceil(CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = stream(seed, c as u64, tags::CALIBRATION);
            let m = CHUNK.min(cfg.calibration_samples - c * CHUNK);
            (0..m).map(|_| Ok(equilibrium_sample(cfg.n, cfg.dim, &mut rng)?.empirical_mean(&f))).collect()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let theta = quantile(&values, 1.0 - cfg.target_p);
    let p = cfg.target_p;
    report.push_value("threshold", Some(cfg.n), None, theta);
    report.push_value("calibration_se", Some(cfg.n), None, (p * (1.0 - p) / values.len() as f64).sqrt());

    let s0 = equilibrium_sample(cfg.n, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let sum0: f64 = s0.velocities().map(&f).sum();
    let mut occ = Occupation { f: &f, n: cfg.n as f64, sum: 0.0, threshold: theta, since: None, spans: Vec::new() };
    occ.reset(sum0, 0.0);
    let mut proc = KacProcess::new(s0, cfg.sampler, stream(seed, 0, tags::DYNAMICS));
    let chunk = 100_000u64;
    while proc.collisions() < cfg.events {
        if proc.run(f64::INFINITY, chunk.min(cfg.events - proc.collisions()), &mut occ)? == 0 {
            break;
        }
        let exact: f64 = proc.state().velocities().map(&f).sum();
        occ.reset(exact, proc.time());
    }
    let horizon = proc.time();
    if let Some(s) = occ.since.take() {
        occ.spans.push((s, horizon));
    }
    report.push_value("collisions", Some(cfg.n), Some(horizon), proc.collisions() as f64);
    let half = 0.5 * horizon;
    for (w, (a, b)) in [(0.0, half), (half, horizon)].into_iter().enumerate() {
        let width = (b - a) / cfg.batches as f64;
        let batch: Vec<f64> = (0..cfg.batches)
            .map(|k| {
                let lo = a + k as f64 * width;
                overlap(&occ.spans, lo, lo + width) / width
            })
            .collect();
        let mut e = Estimate::from_samples(&batch);
        e.mean = overlap(&occ.spans, a, b) / (b - a);
        report.push_cell(&format!("occupation_window_{}", w + 1), Some(cfg.n), Some(b), &e);
        report.verdicts.push(Verdict::within(
            format!("occupation_window_{}", w + 1),
            e.mean,
            Some(p / cfg.band_factor),
            Some(p * cfg.band_factor),
        ));
    }
    Ok(report)
}
