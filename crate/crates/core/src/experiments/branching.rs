use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kac::{KacProcess, SamplerKind};
use crate::kinetic::ParticleState;
use crate::linearized::{estimate_fst_many, growth_bound_check, Environment, SignedParticleSystem, TreeOptions};
use crate::measure::WeightedPointCloud;
use crate::rng::{derive_seed, stream, tags};
use crate::stats::Estimate;

use super::init::{chaotic_init, InitialLaw};
use super::kac_checks::tanh_test_function;
use super::report::{StudyReport, Verdict};

/// Settings for [`branching_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchingConfig {
    pub dim: usize,
    /// Particles in the Kac run that supplies the environment.
    pub env_n: usize,
    pub env_init: InitialLaw,
    pub snapshot_step: f64,
    pub horizon: f64,
    pub n_trees: usize,
    pub population_cap: usize,
    /// Starting velocities for the growth check and the event-level checks.
    pub starts: Vec<Vec<f64>>,
    /// Branching events checked per start, over as many fresh systems as needed.
    pub events_per_start: u64,
    pub tolerance: f64,
    pub sampler: SamplerKind,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            env_n: 2048,
            env_init: InitialLaw::Maxwellian,
            snapshot_step: 0.05,
            horizon: 0.5,
            n_trees: 10_000,
            population_cap: crate::linearized::DEFAULT_POPULATION_CAP,
            starts: vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![1.5, -1.0, 0.5], vec![0.0, 0.0, 4.0]],
            events_per_start: 2000,
            tolerance: 1e-10,
            sampler: SamplerKind::Auto,
        }
    }
}

/// Snapshots of one Kac trajectory on `start, start + step, ...` up to
/// `horizon`, each in force until the next.
///
/// # Errors
///
/// Invalid step or horizon, or as [`Environment::new`].
pub fn environment_from_trajectory(
    state: ParticleState,
    step: f64,
    horizon: f64,
    sampler: SamplerKind,
    seed: u64,
) -> Result<Environment> {
    if !(step > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(KacError::InvalidArgument(format!("bad snapshot step {step} or horizon {horizon}")));
    }
    let pieces = (horizon / step).ceil() as usize;
    let mut times: Vec<f64> = (0..pieces).map(|k| k as f64 * step).collect();
    times.push(horizon);
    let mut p = KacProcess::new(state, sampler, stream(seed, 0, tags::ENVIRONMENT));
    let mut clouds = Vec::with_capacity(pieces);
    for &t in &times[..pieces] {
        p.advance_to(t, &mut ())?;
        clouds.push(WeightedPointCloud::from_state(p.state()));
    }
    Environment::new(times, clouds)
}

fn relative_gap(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(1.0)
}

/// Event-level bookkeeping of the signed system plus the non-explosion
/// check, in an environment built from one Kac run.
///
/// # Errors
///
/// Invalid settings.
pub fn branching_study(cfg: &BranchingConfig, seed: u64) -> Result<StudyReport> {
    if cfg.starts.iter().any(|v| v.len() != cfg.dim) || cfg.starts.is_empty() {
        return Err(KacError::Config(vec![format!("starts must be non-empty with dimension {}", cfg.dim)]));
    }
    let mut report = StudyReport::new("branching", seed, cfg);
    let s0 = chaotic_init(&cfg.env_init, cfg.env_n, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let env = environment_from_trajectory(s0, cfg.snapshot_step, cfg.horizon, cfg.sampler, seed)?;
    report.push_value(
        "lambda3_integral",
        Some(cfg.env_n),
        Some(cfg.horizon),
        env.lambda3_integral(env.start(), cfg.horizon)?,
    );

    let mut worst = 0.0_f64;
    let mut population_errors = 0u64;
    let mut events = 0u64;
    for (k, v0) in cfg.starts.iter().enumerate() {
        let mut rng = stream(seed, k as u64, tags::TREE);
        let mut seen = 0u64;
        while seen < cfg.events_per_start {
            let mut sys = SignedParticleSystem::single(v0, env.start())?;
            let (mut mass, mut mom, mut energy) = (sys.signed_mass(), sys.signed_momentum(), sys.signed_energy());
            while seen + sys.events() < cfg.events_per_start {
                let Some(_) = sys.branch_step(&env, cfg.horizon, &mut rng)? else { break };
                let scale = sys.weighted_total_variation();
                let (m2, p2, e2) = (sys.signed_mass(), sys.signed_momentum(), sys.signed_energy());
                worst = worst.max(relative_gap(m2, mass, scale)).max(relative_gap(e2, energy, scale));
                for (a, b) in p2.iter().zip(&mom) {
                    worst = worst.max(relative_gap(*a, *b, scale));
                }
                (mass, mom, energy) = (m2, p2, e2);
                if sys.len() as u64 != 1 + 2 * sys.events() {
                    population_errors += 1;
                }
            }
            seen += sys.events();
        }
        events += seen;
    }
    report.push_value("branch_events_checked", None, None, events as f64);
    report.push_value("per_event_relative_error", None, None, worst);
    report.verdicts.push(Verdict::within("per_event_conservation", worst, None, Some(cfg.tolerance)));
    report.verdicts.push(Verdict::within("population_count", population_errors as f64, None, Some(0.0)));

    let opts = TreeOptions { n_trees: cfg.n_trees, population_cap: cfg.population_cap };
    let mut failures = 0usize;
    for (k, v0) in cfg.starts.iter().enumerate() {
        let g = growth_bound_check(v0, cfg.horizon, &env, opts, &mut stream(seed, k as u64, tags::CALIBRATION))?;
        let name = format!("growth_start_{k}");
        report.push_cell(&format!("{name}_weighted_mass"), None, Some(cfg.horizon), &g.weighted_mass);
        report.push_value(&format!("{name}_bound"), None, Some(cfg.horizon), g.bound);
        report.push_value(&format!("{name}_discarded"), None, Some(cfg.horizon), g.discarded as f64);
        failures += usize::from(!g.holds);
    }
    report.verdicts.push(Verdict::within("growth_bound", failures as f64, None, Some(0.0)));
    Ok(report)
}

/// Settings for [`representation_study`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationConfig {
    pub dim: usize,
    /// Support size of the two initial measures.
    pub support: usize,
    pub first_law: InitialLaw,
    pub second_law: InitialLaw,
    /// Particles in each ensemble; a multiple of `support`.
    pub ensemble_n: usize,
    pub replicas: usize,
    pub t: f64,
    /// Pieces of the environment grid on `[0, t]`.
    pub env_pieces: usize,
    /// Points per environment piece, split evenly between the two ensembles.
    pub env_points: usize,
    pub n_trees: usize,
    pub population_cap: usize,
    /// Accept when the two sides differ by at most this many combined SE.
    pub z_max: f64,
    pub sampler: SamplerKind,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            support: 20,
            first_law: InitialLaw::Maxwellian,
            second_law: InitialLaw::ParetoRadial { tail_index: 3.0 },
            ensemble_n: 10_000,
            replicas: 50,
            t: 0.25,
            env_pieces: 10,
            env_points: 20_000,
            n_trees: 100_000,
            population_cap: crate::linearized::DEFAULT_POPULATION_CAP,
            z_max: 3.0,
            sampler: SamplerKind::Auto,
        }
    }
}

struct EnsembleRun {
    /// `<f, mu^N_t>` at the final time.
    value: f64,
    /// Subsampled states at the midpoints of the environment pieces.
    pieces: Vec<Vec<f64>>,
}

fn run_ensemble(
    cfg: &RepresentationConfig,
    base: &ParticleState,
    per_replica: usize,
    seed: u64,
    r: usize,
) -> Result<EnsembleRun> {
    let copies = cfg.ensemble_n / cfg.support;
    let mut flat = Vec::with_capacity(cfg.ensemble_n * cfg.dim);
    for _ in 0..copies {
        flat.extend_from_slice(base.as_flat());
    }
    let state = ParticleState::from_flat(cfg.dim, flat)?;
    let mut p = KacProcess::new(state, cfg.sampler, stream(seed, r as u64, tags::DYNAMICS));
    let mut pick = stream(seed, r as u64, tags::ENVIRONMENT);
    let step = cfg.t / cfg.env_pieces as f64;
    let mut pieces = Vec::with_capacity(cfg.env_pieces);
    for k in 0..cfg.env_pieces {
        p.advance_to((k as f64 + 0.5) * step, &mut ())?;
        let cloud = WeightedPointCloud::from_state(p.state()).subsample(per_replica, &mut pick);
        pieces.push(cloud.points_flat().to_vec());
    }
    p.advance_to(cfg.t, &mut ())?;
    Ok(EnsembleRun { value: p.state().empirical_mean(tanh_test_function), pieces })
}

/// Compares `<f, phi_t(mu) - phi_t(nu)>` from two Kac ensembles with
/// `<f_{0t}, mu - nu>` from branching trees in the averaged environment.
///
/// # Errors
///
/// Invalid sizes.
pub fn representation_study(cfg: &RepresentationConfig, seed: u64) -> Result<StudyReport> {
    let mut bad = Vec::new();
    if cfg.support == 0 || !cfg.ensemble_n.is_multiple_of(cfg.support) {
        bad.push("ensemble_n must be a positive multiple of support".to_string());
    }
    if cfg.replicas < 2 || cfg.env_pieces == 0 || cfg.env_points < 2 * cfg.replicas {
        bad.push("need >= 2 replicas, >= 1 piece and env_points >= 2 * replicas".to_string());
    }
    if !(cfg.t > 0.0 && cfg.t.is_finite()) {
        bad.push(format!("t must be positive and finite, got {}", cfg.t));
    }
    if !bad.is_empty() {
        return Err(KacError::Config(bad));
    }
    let mut report = StudyReport::new("representation", seed, cfg);
    let mu = chaotic_init(&cfg.first_law, cfg.support, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let nu = chaotic_init(&cfg.second_law, cfg.support, cfg.dim, &mut stream(seed, 1, tags::INIT))?;
    let per_replica = (cfg.env_points / 2).div_ceil(cfg.replicas);

    let runs = |base: &ParticleState, which: u64| -> Result<Vec<EnsembleRun>> {
        let s = derive_seed(seed, which, tags::DYNAMICS);
        (0..cfg.replicas).into_par_iter().map(|r| run_ensemble(cfg, base, per_replica, s, r)).collect()
    };
    let a = runs(&mu, 0)?;
    let b = runs(&nu, 1)?;
    let ea = Estimate::from_samples(&a.iter().map(|r| r.value).collect::<Vec<_>>());
    let eb = Estimate::from_samples(&b.iter().map(|r| r.value).collect::<Vec<_>>());
    let lhs = ea.mean - eb.mean;
    let lhs_se = ea.combined_se(&eb);
    report.push_cell("ensemble_first", Some(cfg.ensemble_n), Some(cfg.t), &ea);
    report.push_cell("ensemble_second", Some(cfg.ensemble_n), Some(cfg.t), &eb);

    let step = cfg.t / cfg.env_pieces as f64;
    let mut times: Vec<f64> = (0..cfg.env_pieces).map(|k| k as f64 * step).collect();
    times.push(cfg.t);
    let clouds = (0..cfg.env_pieces)
        .map(|k| {
            let pts: Vec<f64> = a.iter().chain(&b).flat_map(|r| r.pieces[k].iter().copied()).collect();
            WeightedPointCloud::uniform(cfg.dim, pts)
        })
        .collect::<Result<Vec<_>>>()?;
    let env = Environment::new(times, clouds)?;
    report.push_value("environment_energy_deviation", None, None, env.energy_deviation());

    let opts = TreeOptions { n_trees: cfg.n_trees, population_cap: cfg.population_cap };
    let side = |state: &ParticleState, which: u64| -> Result<(f64, f64, usize)> {
        let mut rng = stream(seed, which, tags::TREE);
        let mut sum = 0.0;
        let mut var = 0.0;
        let mut flagged = 0;
        for v in state.velocities() {
            let e = estimate_fst_many(&[tanh_test_function], v, 0.0, cfg.t, &env, opts, &mut rng)?.remove(0);
            sum += e.estimate.mean;
            var += e.estimate.se * e.estimate.se;
            flagged += usize::from(e.flagged);
        }
        let m = state.len() as f64;
        Ok((sum / m, var.sqrt() / m, flagged))
    };
    let (ra, sa, fa) = side(&mu, 0)?;
    let (rb, sb, fb) = side(&nu, 1)?;
    let rhs = ra - rb;
    let rhs_se = sa.hypot(sb);
    report.push_value("lhs", None, Some(cfg.t), lhs);
    report.push_value("lhs_se", None, Some(cfg.t), lhs_se);
    report.push_value("rhs", None, Some(cfg.t), rhs);
    report.push_value("rhs_se", None, Some(cfg.t), rhs_se);
    report.push_value("flagged_points", None, Some(cfg.t), (fa + fb) as f64);
    report.push_value(
        "initial_pairing",
        None,
        Some(0.0),
        mu.empirical_mean(tanh_test_function) - nu.empirical_mean(tanh_test_function),
    );
    let se = lhs_se.hypot(rhs_se);
    let z = if se > 0.0 { (lhs - rhs).abs() / se } else { f64::INFINITY };
    report.push_value("z", None, Some(cfg.t), z);
    report.verdicts.push(Verdict::within("sides_agree", z, None, Some(cfg.z_max)));
    Ok(report)
}
