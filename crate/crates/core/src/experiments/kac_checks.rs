use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kac::{generator_drift, CollisionObserver, CollisionRecord, KacProcess, SamplerKind};
use crate::kinetic::{collision_operator_integrate, norm_sq, SigmaScheme};
use crate::measure::WeightedPointCloud;
use crate::metrics::{correlation_check, lambda_k, moment_weight};
use crate::rng::{stream, tags};
use crate::stats::Estimate;

use super::convergence::replica_index;
use super::init::{chaotic_init, InitialLaw};
use super::report::{StudyReport, Verdict};

/// Settings for [`conservation_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConservationConfig {
    pub dim: usize,
    pub n: usize,
    pub events: u64,
    pub checkpoints: u64,
    pub init: InitialLaw,
    pub sampler: SamplerKind,
    pub per_event_tolerance: f64,
    pub drift_tolerance: f64,
}

impl Default for ConservationConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 512,
            events: 1_000_000,
            checkpoints: 100,
            init: InitialLaw::Maxwellian,
            sampler: SamplerKind::Auto,
            per_event_tolerance: 1e-10,
            drift_tolerance: 1e-8,
        }
    }
}

#[derive(Default)]
struct PairBalance {
    worst: f64,
}

impl CollisionObserver for PairBalance {
    fn on_collision(&mut self, r: &CollisionRecord<'_>) {
        let [b0, b1] = r.before;
        let [a0, a1] = r.after;
        let e0 = norm_sq(b0) + norm_sq(b1);
        let scale = e0.max(f64::MIN_POSITIVE);
        let de = (norm_sq(a0) + norm_sq(a1) - e0).abs() / scale;
        let dp = (0..b0.len()).map(|k| ((a0[k] + a1[k]) - (b0[k] + b1[k])).abs()).fold(0.0, f64::max) / scale.sqrt();
        self.worst = self.worst.max(de).max(dp);
    }
}

/// Long single trajectory checking per-collision and trajectory-level
/// conservation of momentum and energy.
///
/// # Errors
///
/// Invalid sizes.
pub fn conservation_study(cfg: &ConservationConfig, seed: u64) -> Result<StudyReport> {
    if cfg.checkpoints == 0 || cfg.events == 0 {
        return Err(KacError::Config(vec!["events and checkpoints must be positive".into()]));
    }
    let mut report = StudyReport::new("conservation", seed, cfg);
    let s0 = chaotic_init(&cfg.init, cfg.n, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let mut p = KacProcess::new(s0, cfg.sampler, stream(seed, 0, tags::DYNAMICS));
    let mut balance = PairBalance::default();
    let chunk = cfg.events.div_ceil(cfg.checkpoints);
    let n = cfg.n as f64;
    let mut drift_p = 0.0_f64;
    let mut drift_e = 0.0_f64;
    while p.collisions() < cfg.events {
        let done = p.run(f64::INFINITY, chunk.min(cfg.events - p.collisions()), &mut balance)?;
        let s = p.state();
        drift_p = drift_p.max(norm_sq(s.momentum()).sqrt() / n);
        drift_e = drift_e.max((s.energy() / n - 1.0).abs());
        if done == 0 {
            break;
        }
    }
    report.push_value("collisions", Some(cfg.n), Some(p.time()), p.collisions() as f64);
    report.push_value("per_event_relative_error", Some(cfg.n), None, balance.worst);
    report.push_value("mean_velocity_drift", Some(cfg.n), None, drift_p);
    report.push_value("energy_drift", Some(cfg.n), None, drift_e);
    report.push_value("index_refresh_drift", Some(cfg.n), None, p.max_refresh_drift());
    report.verdicts.push(Verdict::within("collisions", p.collisions() as f64, Some(cfg.events as f64), None));
    report.verdicts.push(Verdict::within("per_event", balance.worst, None, Some(cfg.per_event_tolerance)));
    report.verdicts.push(Verdict::within("momentum_drift", drift_p, None, Some(cfg.drift_tolerance)));
    report.verdicts.push(Verdict::within("energy_drift", drift_e, None, Some(cfg.drift_tolerance)));
    report.verdicts.push(Verdict::within("index_refresh_drift", p.max_refresh_drift(), None, Some(1e-8)));
    Ok(report)
}

/// Settings for [`generator_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub replicas: usize,
    pub sigma_draws: usize,
    pub sampler: SamplerKind,
    pub max_z: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { dim: 3, n: 50, h: 1e-3, replicas: 100_000, sigma_draws: 10_000, sampler: SamplerKind::Auto, max_z: 3.0 }
    }
}

/// Test function `(1 + |v|^2) tanh(v_1)`.
#[must_use]
pub fn tanh_test_function(v: &[f64]) -> f64 {
    (1.0 + norm_sq(v)) * v[0].tanh()
}

/// Compares the finite-difference drift of `<f, mu^N>` with `<f, Q(mu^N_0)>`
/// for `f = (1 + |v|^2) tanh(v_1)`.
///
/// # Errors
///
/// Invalid sizes.
pub fn generator_study(cfg: &GeneratorConfig, seed: u64) -> Result<StudyReport> {
    let mut report = StudyReport::new("generator", seed, cfg);
    let s0 = chaotic_init(&InitialLaw::Maxwellian, cfg.n, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let drift = generator_drift(
        &s0,
        tanh_test_function,
        cfg.h,
        cfg.replicas,
        cfg.sampler,
        &mut stream(seed, 0, tags::DYNAMICS),
    )?;
    let q = collision_operator_integrate(
        &WeightedPointCloud::from_state(&s0),
        tanh_test_function,
        &SigmaScheme::MonteCarlo { draws: cfg.sigma_draws },
        &mut stream(seed, 0, tags::SIGMA),
    )?;
    report.push_cell("finite_difference_drift", Some(cfg.n), Some(cfg.h), &drift);
    report.push_cell("collision_operator", Some(cfg.n), Some(0.0), &q);
    let z = drift.z_score(&q);
    report.push_value("z_score", Some(cfg.n), None, z);
    report.verdicts.push(Verdict::within("drift_matches_operator", z, None, Some(cfg.max_z)));
    Ok(report)
}

/// Settings for [`moment_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentConfig {
    pub dim: usize,
    pub n: usize,
    pub init: InitialLaw,
    pub times: Vec<f64>,
    pub replicas: usize,
    /// Orders `q` whose means `E[Lambda_q]` are reported.
    pub orders: Vec<f64>,
    /// Orders checked against the collision jump bound.
    pub jump_orders: Vec<f64>,
    /// Collisions of the extra long run used for the jump bound.
    pub jump_check_events: u64,
    pub correlation_pairs: Vec<(f64, f64)>,
    /// Extra random clouds, beyond the simulated snapshots, checked against
    /// the correlation inequality.
    pub random_measures: usize,
    /// Finiteness check `E[Lambda_4(t)] < limit` at `limit_time`.
    pub limit_time: f64,
    pub lambda4_limit: f64,
    pub sampler: SamplerKind,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 512,
            init: InitialLaw::ParetoRadial { tail_index: 3.0 },
            times: vec![0.0, 0.05, 0.1, 0.2, 0.5, 1.0],
            replicas: 20,
            orders: vec![2.5, 4.0],
            jump_orders: vec![2.0, 3.0, 4.0, 6.0],
            jump_check_events: 1_000_000,
            correlation_pairs: vec![(2.0, 2.0), (2.0, 4.0), (3.0, 3.0)],
            random_measures: 10_000,
            limit_time: 0.1,
            lambda4_limit: 1e3,
            sampler: SamplerKind::Auto,
        }
    }
}

/// Tracks `N Lambda_k` incrementally and checks every jump against
/// `Lambda_k(post) <= 2^{k/2+1} Lambda_k(pre)`.
struct JumpTracker {
    orders: Vec<f64>,
    sums: Vec<f64>,
    checked: u64,
    violations: u64,
    worst_ratio: Vec<f64>,
}

impl JumpTracker {
    fn new(orders: &[f64], state: &crate::kinetic::ParticleState) -> Self {
        let sums = orders.iter().map(|&k| state.velocities().map(|v| moment_weight(v, k)).sum()).collect();
        Self { orders: orders.to_vec(), sums, checked: 0, violations: 0, worst_ratio: vec![0.0; orders.len()] }
    }
}

impl CollisionObserver for JumpTracker {
    fn on_collision(&mut self, r: &CollisionRecord<'_>) {
        self.checked += 1;
        for (m, &k) in self.orders.iter().enumerate() {
            let pre = self.sums[m];
            let post = pre + moment_weight(r.after[0], k) + moment_weight(r.after[1], k)
                - moment_weight(r.before[0], k)
                - moment_weight(r.before[1], k);
            let ratio = post / pre;
            self.worst_ratio[m] = self.worst_ratio[m].max(ratio / 2f64.powf(0.5 * k + 1.0));
            if post > 2f64.powf(0.5 * k + 1.0) * pre * (1.0 + 1e-12) {
                self.violations += 1;
            }
            self.sums[m] = post;
        }
    }
}

/// Random clouds of 1 to 50 atoms with Gaussian points at random scales
/// and random weights.
fn random_correlation_checks(cfg: &MomentConfig, seed: u64) -> Result<(u64, u64)> {
    let counts: Vec<(u64, u64)> = (0..cfg.random_measures)
        .into_par_iter()
        .map(|k| -> Result<(u64, u64)> {
            let mut rng = stream(seed, k as u64, tags::METRIC);
            let m = rng.random_range(1..=50);
            let scale = (4.0 * rng.random::<f64>() - 2.0).exp();
            let pts: Vec<f64> = (0..m * cfg.dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = w.iter().sum();
            let mu = WeightedPointCloud::new(cfg.dim, pts, w.into_iter().map(|x| x / total).collect())?;
            let mut bad = 0;
            for &(a, b) in &cfg.correlation_pairs {
                bad += u64::from(!correlation_check(&mu, a, b)?.holds);
            }
            Ok((cfg.correlation_pairs.len() as u64, bad))
        })
        .collect::<Result<_>>()?;
    Ok(counts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1)))
}

/// Moment means for heavy-tailed data, the collision jump bound on every
/// simulated event and the correlation inequality on every snapshot.
///
/// # Errors
///
/// Invalid sizes or times.
pub fn moment_study(cfg: &MomentConfig, seed: u64) -> Result<StudyReport> {
    if cfg.replicas < 2 || cfg.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(KacError::Config(vec!["need >= 2 replicas and strictly increasing times".into()]));
    }
    let mut report = StudyReport::new("moments", seed, cfg);
    struct Outcome {
        lambdas: Vec<Vec<f64>>,
        checked: u64,
        violations: u64,
        worst: Vec<f64>,
        corr_checked: u64,
        corr_violations: u64,
    }
    let run = |r: usize, target_events: Option<u64>| -> Result<Outcome> {
        let idx = replica_index(cfg.n, r);
        let s0 = chaotic_init(&cfg.init, cfg.n, cfg.dim, &mut stream(seed, idx, tags::INIT))?;
        let mut tracker = JumpTracker::new(&cfg.jump_orders, &s0);
        let mut p = KacProcess::new(s0, cfg.sampler, stream(seed, idx, tags::DYNAMICS));
        let mut lambdas = Vec::new();
        let mut corr_checked = 0;
        let mut corr_violations = 0;
        let mut snapshot = |p: &KacProcess, lambdas: &mut Vec<Vec<f64>>| -> Result<()> {
            let mu = WeightedPointCloud::from_state(p.state());
            lambdas.push(cfg.orders.iter().map(|&q| lambda_k(&mu, q)).collect::<Result<_>>()?);
            for &(a, b) in &cfg.correlation_pairs {
                corr_checked += 1;
                if !correlation_check(&mu, a, b)?.holds {
                    corr_violations += 1;
                }
            }
            Ok(())
        };
        match target_events {
            None => {
                for &t in &cfg.times {
                    p.advance_to(t, &mut tracker)?;
                    snapshot(&p, &mut lambdas)?;
                }
            }
            Some(events) => {
                let chunk = (events / 16).max(1);
                while p.collisions() < events {
                    if p.run(f64::INFINITY, chunk.min(events - p.collisions()), &mut tracker)? == 0 {
                        break;
                    }
                    snapshot(&p, &mut lambdas)?;
                }
            }
        }
        Ok(Outcome {
            lambdas,
            checked: tracker.checked,
            violations: tracker.violations,
            worst: tracker.worst_ratio,
            corr_checked,
            corr_violations,
        })
    };
    let mut outcomes: Vec<Outcome> = (0..cfg.replicas).into_par_iter().map(|r| run(r, None)).collect::<Result<_>>()?;
    let long = run(cfg.replicas, Some(cfg.jump_check_events))?;
    for (k, &t) in cfg.times.iter().enumerate() {
        for (m, &q) in cfg.orders.iter().enumerate() {
            let xs: Vec<f64> = outcomes.iter().map(|o| o.lambdas[k][m]).collect();
            report.push_cell(&format!("lambda_{q}"), Some(cfg.n), Some(t), &Estimate::from_samples(&xs));
        }
    }
    outcomes.push(long);
    let (random_checked, random_violations) = random_correlation_checks(cfg, seed)?;
    let checked: u64 = outcomes.iter().map(|o| o.checked).sum();
    let violations: u64 = outcomes.iter().map(|o| o.violations).sum();
    let corr_checked: u64 = outcomes.iter().map(|o| o.corr_checked).sum::<u64>() + random_checked;
    let corr_violations: u64 = outcomes.iter().map(|o| o.corr_violations).sum::<u64>() + random_violations;
    for (m, &k) in cfg.jump_orders.iter().enumerate() {
        let worst = outcomes.iter().map(|o| o.worst[m]).fold(0.0, f64::max);
        report.push_value(&format!("jump_ratio_over_bound_{k}"), Some(cfg.n), None, worst);
    }
    report.push_value("collisions_checked", Some(cfg.n), None, checked as f64);
    report.push_value("jump_violations", Some(cfg.n), None, violations as f64);
    report.push_value("snapshots_checked", Some(cfg.n), None, corr_checked as f64);
    report.push_value("correlation_violations", Some(cfg.n), None, corr_violations as f64);
    report.verdicts.push(Verdict::within(
        "collisions_checked",
        checked as f64,
        Some(cfg.jump_check_events as f64),
        None,
    ));
    report.verdicts.push(Verdict::within("jump_bound", violations as f64, None, Some(0.0)));
    report.verdicts.push(Verdict::within("correlation_inequality", corr_violations as f64, None, Some(0.0)));
    if let (Some(k), Some(m)) =
        (cfg.times.iter().position(|t| *t == cfg.limit_time), cfg.orders.iter().position(|q| *q == 4.0))
    {
        let xs: Vec<f64> = outcomes[..cfg.replicas].iter().map(|o| o.lambdas[k][m]).collect();
        let e = Estimate::from_samples(&xs);
        report.verdicts.push(Verdict::within("lambda_4_finite", e.mean, None, Some(cfg.lambda4_limit)));
    }
    Ok(report)
}
