use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::kinetic::{collide_into, sample_sigma_into, ParticleState};
use crate::rng::SimRng;

use super::rates::PairRateIndex;
use super::thinning::SpeedIndex;

/// Full recomputation period of the incrementally maintained rate indices.
pub const REFRESH_PERIOD: u64 = 1 << 16;

/// Below this many particles [`SamplerKind::Auto`] uses row sums.
pub const AUTO_THINNING_THRESHOLD: usize = 64;

/// How the next colliding pair is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Exact Gillespie steps from maintained row sums, O(N) per event.
    RowSums,
    /// Thinning against the speed majorant, O(log N) per proposal.
    SpeedThinning,
    /// Row sums for small systems, thinning from
    /// [`AUTO_THINNING_THRESHOLD`] particles on.
    #[default]
    Auto,
}

impl SamplerKind {
    #[must_use]
    pub fn resolve(self, n: usize) -> Self {
        match self {
            Self::Auto if n < AUTO_THINNING_THRESHOLD => Self::RowSums,
            Self::Auto => Self::SpeedThinning,
            k => k,
        }
    }
}

/// One collision of a trajectory, with `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub i: usize,
    pub j: usize,
    pub sigma: Vec<f64>,
}

/// What an observer sees at a collision: `before` and `after` hold the
/// velocities of particles `i` and `j` in that order.
#[derive(Debug)]
pub struct CollisionRecord<'a> {
    pub time: f64,
    pub i: usize,
    pub j: usize,
    pub sigma: &'a [f64],
    pub before: [&'a [f64]; 2],
    pub after: [&'a [f64]; 2],
    pub n: usize,
}

pub trait CollisionObserver {
    fn on_collision(&mut self, record: &CollisionRecord<'_>);
}

impl CollisionObserver for () {
    fn on_collision(&mut self, _: &CollisionRecord<'_>) {}
}

impl<F: FnMut(&CollisionRecord<'_>)> CollisionObserver for F {
    fn on_collision(&mut self, record: &CollisionRecord<'_>) {
        self(record);
    }
}

#[derive(Clone, Debug)]
enum Sampler {
    Rows(PairRateIndex),
    Speeds(SpeedIndex),
}

/// A running Kac process.
///
/// Proposal times are drawn ahead and kept across calls to
/// [`KacProcess::advance_to`], so the trajectory does not depend on how it is
/// observed. The state at a time `t` is the left limit: a collision scheduled
/// exactly at `t` is applied after the stop.
#[derive(Clone, Debug)]
pub struct KacProcess {
    state: ParticleState,
    time: f64,
    sampler: Sampler,
    rng: SimRng,
    pending: Option<f64>,
    collisions: u64,
    proposals: u64,
    max_refresh_drift: f64,
    log: Option<Vec<CollisionEvent>>,
    last: (usize, usize),
    sigma: Vec<f64>,
    old_i: Vec<f64>,
    old_j: Vec<f64>,
}

impl KacProcess {
    #[must_use]
    pub fn new(state: ParticleState, kind: SamplerKind, rng: SimRng) -> Self {
        let sampler = match kind.resolve(state.len()) {
            SamplerKind::SpeedThinning => Sampler::Speeds(SpeedIndex::from_state(&state)),
            _ => Sampler::Rows(PairRateIndex::from_state(&state)),
        };
        let d = state.dim();
        Self {
            state,
            time: 0.0,
            sampler,
            rng,
            pending: None,
            collisions: 0,
            proposals: 0,
            max_refresh_drift: 0.0,
            log: None,
            last: (0, 0),
            sigma: vec![0.0; d],
            old_i: vec![0.0; d],
            old_j: vec![0.0; d],
        }
    }

    /// Starts keeping an event log.
    #[must_use]
    pub fn with_event_log(mut self) -> Self {
        self.log.get_or_insert_with(Vec::new);
        self
    }

    /// Replaces the random stream and drops any pre-drawn proposal time.
    /// Used to fan out replicas from one prepared process.
    #[must_use]
    pub fn reseeded(mut self, rng: SimRng) -> Self {
        self.rng = rng;
        self.pending = None;
        self
    }

    /// Current state, with momentum and energy caches refreshed.
    #[must_use]
    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    #[must_use]
    pub fn into_state(self) -> ParticleState {
        self.state
    }

    #[must_use]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[must_use]
    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Proposals drawn, including thinning rejections.
    #[must_use]
    pub fn proposals(&self) -> u64 {
        self.proposals
    }

    #[must_use]
    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            Sampler::Rows(_) => SamplerKind::RowSums,
            Sampler::Speeds(_) => SamplerKind::SpeedThinning,
        }
    }

    /// Rate of the proposal clock: the exact total rate for row sums, the
    /// majorant for thinning.
    #[must_use]
    pub fn proposal_rate(&self) -> f64 {
        match &self.sampler {
            Sampler::Rows(idx) => idx.total_rate(),
            Sampler::Speeds(idx) => idx.majorant(),
        }
    }

    /// Largest relative drift removed by a periodic index refresh so far.
    #[must_use]
    pub fn max_refresh_drift(&self) -> f64 {
        self.max_refresh_drift
    }

    #[must_use]
    pub fn events(&self) -> Option<&[CollisionEvent]> {
        self.log.as_deref()
    }

    #[must_use]
    pub fn take_events(&mut self) -> Option<Vec<CollisionEvent>> {
        self.log.take()
    }

    /// Forces a full recomputation of the rate index; returns the relative
    /// drift it removed.
    pub fn refresh_index(&mut self) -> f64 {
        let drift = match &mut self.sampler {
            Sampler::Rows(idx) => idx.refresh(&self.state),
            Sampler::Speeds(idx) => idx.refresh(&self.state),
        };
        self.max_refresh_drift = self.max_refresh_drift.max(drift);
        drift
    }

    fn next_proposal_time(&mut self) -> f64 {
        if let Some(t) = self.pending {
            return t;
        }
        let rate = self.proposal_rate();
        let t = if rate > 0.0 {
            let e: f64 = self.rng.sample(Exp1);
            self.time + e / rate
        } else {
            f64::INFINITY
        };
        self.pending = Some(t);
        t
    }

    /// Runs the chain until time `t_end` or until `max_collisions` collisions
    /// have happened, whichever comes first. Returns the number of
    /// collisions applied.
    ///
    /// # Errors
    ///
    /// `t_end` is NaN or earlier than the current time.
    pub fn run<O: CollisionObserver + ?Sized>(
        &mut self,
        t_end: f64,
        max_collisions: u64,
        observer: &mut O,
    ) -> Result<u64> {
        if !(t_end >= self.time) {
            return Err(KacError::InvalidArgument(format!("cannot advance from time {} to {t_end}", self.time)));
        }
        let start = self.collisions;
        while self.collisions - start < max_collisions {
            let tau = self.next_proposal_time();
            if tau >= t_end {
                break;
            }
            self.time = tau;
            self.pending = None;
            self.proposals += 1;
            let pair = match &self.sampler {
                Sampler::Rows(idx) => idx.sample_pair(&self.state, &mut self.rng),
                Sampler::Speeds(idx) => idx.propose(&self.state, &mut self.rng),
            };
            match pair {
                Some((a, b)) => self.collide(a, b, observer),
                None => {
                    if matches!(self.sampler, Sampler::Rows(_)) {
                        self.refresh_index();
                    }
                }
            }
        }
        if t_end.is_finite() && self.collisions - start < max_collisions {
            self.time = t_end;
        }
        self.state.refresh();
        Ok(self.collisions - start)
    }

    /// Advances to `t_end`, left limit included.
    ///
    /// # Errors
    ///
    /// As [`KacProcess::run`].
    pub fn advance_to<O: CollisionObserver + ?Sized>(&mut self, t_end: f64, observer: &mut O) -> Result<u64> {
        self.run(t_end, u64::MAX, observer)
    }

    /// Applies exactly one more collision. Returns `None` in an absorbing
    /// state (all velocities equal).
    pub fn step<O: CollisionObserver + ?Sized>(&mut self, observer: &mut O) -> Option<CollisionEvent> {
        let before = self.collisions;
        self.run(f64::INFINITY, 1, observer).ok()?;
        if self.collisions == before {
            return None;
        }
        Some(self.last_event())
    }

    fn last_event(&self) -> CollisionEvent {
        if let Some(e) = self.log.as_ref().and_then(|l| l.last()) {
            return e.clone();
        }
        CollisionEvent { time: self.time, i: self.last.0, j: self.last.1, sigma: self.sigma.clone() }
    }

    fn collide<O: CollisionObserver + ?Sized>(&mut self, a: usize, b: usize, observer: &mut O) {
        sample_sigma_into(&mut self.rng, &mut self.sigma);
        let (i, j) = if a < b {
            (a, b)
        } else {
            for s in &mut self.sigma {
                *s = -*s;
            }
            (b, a)
        };
        self.old_i.copy_from_slice(self.state.velocity(i));
        self.old_j.copy_from_slice(self.state.velocity(j));
        {
            let (vi, vj) = self.state.pair_mut(i, j);
            collide_into(&self.old_i, &self.old_j, &self.sigma, vi, vj);
        }
        self.collisions += 1;
        self.last = (i, j);
        match &mut self.sampler {
            Sampler::Rows(idx) => idx.update(&self.state, i, j, &self.old_i, &self.old_j),
            Sampler::Speeds(idx) => idx.update(&self.state, i, j),
        }
        observer.on_collision(&CollisionRecord {
            time: self.time,
            i,
            j,
            sigma: &self.sigma,
            before: [&self.old_i, &self.old_j],
            after: [self.state.velocity(i), self.state.velocity(j)],
            n: self.state.len(),
        });
        if let Some(log) = &mut self.log {
            log.push(CollisionEvent { time: self.time, i, j, sigma: self.sigma.clone() });
        }
        let due = match &self.sampler {
            Sampler::Rows(idx) => idx.updates_since_refresh() >= REFRESH_PERIOD,
            Sampler::Speeds(idx) => idx.updates_since_refresh() >= REFRESH_PERIOD,
        };
        if due {
            self.refresh_index();
        }
    }
}

/// Re-applies a logged event sequence to `initial`.
///
/// # Errors
///
/// Out-of-range or repeated indices, a sigma of the wrong dimension, or
/// non-increasing times.
pub fn replay(initial: &ParticleState, events: &[CollisionEvent]) -> Result<ParticleState> {
    let mut state = initial.clone();
    let d = state.dim();
    let n = state.len();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut last = f64::NEG_INFINITY;
    for (k, e) in events.iter().enumerate() {
        if e.i >= n || e.j >= n || e.i == e.j {
            return Err(KacError::InvalidArgument(format!("event {k}: bad pair ({}, {})", e.i, e.j)));
        }
        crate::error::check_dim(d, e.sigma.len())?;
        if !(e.time > last) {
            return Err(KacError::InvalidArgument(format!("event {k}: time {} not increasing", e.time)));
        }
        last = e.time;
        a.copy_from_slice(state.velocity(e.i));
        b.copy_from_slice(state.velocity(e.j));
        let (vi, vj) = state.pair_mut(e.i, e.j);
        collide_into(&a, &b, &e.sigma, vi, vj);
    }
    state.refresh();
    Ok(state)
}
