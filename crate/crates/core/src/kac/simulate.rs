use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kinetic::{norm_sq, ParticleState};
use crate::metrics::moment_weight;
use crate::rng::{stream, tags, SimRng};
use crate::stats::Estimate;

use super::process::{CollisionEvent, KacProcess, SamplerKind};

/// A named real function of one velocity.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    #[must_use]
    pub fn eval(&self, v: &[f64]) -> f64 {
        (self.f)(v)
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Quantities recorded on the observation grid, all against the empirical
/// measure.
#[derive(Clone, Debug)]
pub enum Observable {
    /// `Lambda_k = <(1 + |v|^2)^{k/2}, mu>`.
    Moment(f64),
    /// `<f, mu>`.
    Mean(TestFunction),
    /// `|<v, mu>|`.
    MomentumNorm,
    /// `<|v|^2, mu>`.
    Energy,
}

impl Observable {
    #[must_use]
    pub fn name(&self) -> String {
        match self {
            Self::Moment(k) => format!("lambda_{k}"),
            Self::Mean(f) => f.name.clone(),
            Self::MomentumNorm => "momentum_norm".into(),
            Self::Energy => "energy".into(),
        }
    }

    #[must_use]
    pub fn evaluate(&self, state: &ParticleState) -> f64 {
        let n = state.len() as f64;
        match self {
            Self::Moment(k) => state.empirical_mean(|v| moment_weight(v, *k)),
            Self::Mean(f) => state.empirical_mean(|v| f.eval(v)),
            Self::MomentumNorm => norm_sq(state.momentum()).sqrt() / n,
            Self::Energy => state.energy() / n,
        }
    }
}

/// Observation grid, observables and whether to keep full snapshots.
#[derive(Clone, Debug, Default)]
pub struct ObservationPlan {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub snapshots: bool,
}

impl ObservationPlan {
    fn validate(&self, t_fin: f64) -> Result<()> {
        let mut last = 0.0;
        for &t in &self.times {
            if !(t >= last && t <= t_fin) {
                return Err(KacError::InvalidArgument(format!(
                    "observation times must be nondecreasing within [0, {t_fin}], got {t}"
                )));
            }
            last = t;
        }
        Ok(())
    }
}

/// Observable values on the grid: `values[k][m]` is observable `m` at
/// `times[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub snapshots: Vec<ParticleState>,
}

impl ObservableSeries {
    /// Column of observable `m`.
    #[must_use]
    pub fn column(&self, m: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[m]).collect()
    }
}

/// A simulated path: initial state, event log and end state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub initial: ParticleState,
    pub t_final: f64,
    pub sampler: SamplerKind,
    pub events: Vec<CollisionEvent>,
    pub final_state: ParticleState,
}

/// Simulates up to `t_fin`, recording the plan's observables and the full
/// event log.
///
/// # Errors
///
/// Negative or NaN `t_fin`, or an invalid grid.
pub fn simulate(
    state0: &ParticleState,
    t_fin: f64,
    plan: &ObservationPlan,
    sampler: SamplerKind,
    rng: SimRng,
) -> Result<(Trajectory, ObservableSeries)> {
    if !(t_fin >= 0.0) || !t_fin.is_finite() {
        return Err(KacError::InvalidArgument(format!("final time must be finite and >= 0, got {t_fin}")));
    }
    plan.validate(t_fin)?;
    let mut process = KacProcess::new(state0.clone(), sampler, rng).with_event_log();
    let mut series = ObservableSeries {
        times: plan.times.clone(),
        names: plan.observables.iter().map(Observable::name).collect(),
        values: Vec::with_capacity(plan.times.len()),
        snapshots: Vec::new(),
    };
    for &t in &plan.times {
        process.advance_to(t, &mut ())?;
        let state = process.state();
        series.values.push(plan.observables.iter().map(|o| o.evaluate(state)).collect());
        if plan.snapshots {
            series.snapshots.push(state.clone());
        }
    }
    process.advance_to(t_fin, &mut ())?;
    let sampler = process.sampler_kind();
    let events = process.take_events().unwrap_or_default();
    let trajectory =
        Trajectory { initial: state0.clone(), t_final: t_fin, sampler, events, final_state: process.into_state() };
    Ok((trajectory, series))
}

/// Finite-difference generator estimate `(<f, mu_h> - <f, mu_0>) / h`,
/// averaged over independent replicas started from `state0`.
///
/// # Errors
///
/// Fewer than two replicas, or `h` not positive and finite.
pub fn generator_drift<F, R>(
    state0: &ParticleState,
    f: F,
    h: f64,
    replicas: usize,
    sampler: SamplerKind,
    rng: &mut R,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Rng + ?Sized,
{
    if replicas < 2 {
        return Err(KacError::InvalidArgument(format!("need at least 2 replicas, got {replicas}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(KacError::InvalidArgument(format!("step must be positive and finite, got {h}")));
    }
    let seed = rng.next_u64();
    let f0 = state0.empirical_mean(&f);
    let proto = KacProcess::new(state0.clone(), sampler, stream(seed, 0, tags::DYNAMICS));
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut p = proto.clone().reseeded(stream(seed, r as u64, tags::DYNAMICS));
            if p.advance_to(h, &mut ()).unwrap_or(0) == 0 {
                return 0.0;
            }
            (p.state().empirical_mean(&f) - f0) / h
        })
        .collect();
    Ok(Estimate::from_samples(&samples))
}
