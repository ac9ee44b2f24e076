use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::experiments::{
    BaselineConfig, BranchingConfig, ChaosConfig, ConservationConfig, ConvergenceConfig, GeneratorConfig, InitialLaw,
    MomentConfig, NonchaoticConfig, RecurrenceConfig, RelaxationConfig, RepresentationConfig, StartingPoint,
};
use crate::kac::SamplerKind;
use crate::rng::SEED_SCHEME;

/// Settings for a single trajectory written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub dim: usize,
    pub n: usize,
    pub start: StartingPoint,
    pub t_final: f64,
    /// Times at which the state is written; `t_final` is always included.
    pub snapshot_times: Vec<f64>,
    pub sampler: SamplerKind,
    pub log_events: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            n: 512,
            start: StartingPoint::Chaotic { law: InitialLaw::Maxwellian },
            t_final: 1.0,
            snapshot_times: Vec::new(),
            sampler: SamplerKind::Auto,
            log_events: true,
        }
    }
}

/// What a run does, with its study-specific settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudySpec {
    Simulate(SimulateConfig),
    Convergence(ConvergenceConfig),
    UniformTime(ConvergenceConfig),
    Baseline(BaselineConfig),
    Conservation(ConservationConfig),
    Generator(GeneratorConfig),
    Moments(MomentConfig),
    Recurrence(RecurrenceConfig),
    Relaxation(RelaxationConfig),
    Chaos(ChaosConfig),
    Nonchaotic(NonchaoticConfig),
    Branching(BranchingConfig),
    Representation(RepresentationConfig),
}

impl StudySpec {
    /// The `kind` tag.
    #[must_use]
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Convergence(_) => "convergence",
            Self::UniformTime(_) => "uniform_time",
            Self::Baseline(_) => "baseline",
            Self::Conservation(_) => "conservation",
            Self::Generator(_) => "generator",
            Self::Moments(_) => "moments",
            Self::Recurrence(_) => "recurrence",
            Self::Relaxation(_) => "relaxation",
            Self::Chaos(_) => "chaos",
            Self::Nonchaotic(_) => "nonchaotic",
            Self::Branching(_) => "branching",
            Self::Representation(_) => "representation",
        }
    }

    /// Default settings for a kind, or `None` for an unknown name.
    #[must_use]
    pub fn default_for(kind: &str) -> Option<Self> {
        Some(match kind {
            "simulate" => Self::Simulate(SimulateConfig::default()),
            "convergence" => Self::Convergence(ConvergenceConfig::default()),
            "uniform_time" => Self::UniformTime(ConvergenceConfig::uniform_time()),
            "baseline" => Self::Baseline(BaselineConfig::default()),
            "conservation" => Self::Conservation(ConservationConfig::default()),
            "generator" => Self::Generator(GeneratorConfig::default()),
            "moments" => Self::Moments(MomentConfig::default()),
            "recurrence" => Self::Recurrence(RecurrenceConfig::default()),
            "relaxation" => Self::Relaxation(RelaxationConfig::default()),
            "chaos" => Self::Chaos(ChaosConfig::default()),
            "nonchaotic" => Self::Nonchaotic(NonchaoticConfig::default()),
            "branching" => Self::Branching(BranchingConfig::default()),
            "representation" => Self::Representation(RepresentationConfig::default()),
            _ => return None,
        })
    }
}

/// A complete, validated description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scheme")]
    pub seed_scheme: String,
    /// Output directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    pub study: StudySpec,
}

fn default_scheme() -> String {
    SEED_SCHEME.to_string()
}

impl RunConfig {
    #[must_use]
    pub fn new(study: StudySpec) -> Self {
        Self { seed: 0, seed_scheme: default_scheme(), out: None, threads: None, study }
    }

    /// Every violated constraint, each naming its field.
    #[must_use]
    pub fn violations(&self) -> Vec<String> {
        let mut c = Checks::default();
        if self.seed_scheme != SEED_SCHEME {
            c.fail("seed_scheme", format!("unknown scheme {:?}, expected {SEED_SCHEME:?}", self.seed_scheme));
        }
        if self.threads == Some(0) {
            c.fail("threads", "must be >= 1".into());
        }
        study_checks(&self.study, &mut c);
        c.0
    }

    /// # Errors
    ///
    /// [`KacError::Config`] listing all violations.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KacError::Config(v))
        }
    }

    /// Canonical text: pretty JSON with every default filled in and a
    /// trailing newline.
    #[must_use]
    pub fn emit(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    /// Parses and validates config text. Unknown keys are rejected.
    ///
    /// # Errors
    ///
    /// Malformed JSON, unknown keys, or failed validation.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| KacError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads, parses and validates a config file.
///
/// # Errors
///
/// As [`RunConfig::parse`], or an unreadable file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    RunConfig::parse(&std::fs::read_to_string(path)?)
}

#[derive(Default)]
struct Checks(Vec<String>);

impl Checks {
    fn fail(&mut self, field: &str, msg: String) {
        self.0.push(format!("{field}: {msg}"));
    }

    fn dim(&mut self, d: usize) {
        if d < 2 {
            self.fail("study.dim", format!("must be >= 2, got {d}"));
        }
    }

    fn at_least(&mut self, field: &str, value: usize, min: usize) {
        if value < min {
            self.fail(field, format!("must be >= {min}, got {value}"));
        }
    }

    fn particles(&mut self, field: &str, ns: &[usize]) {
        if ns.is_empty() {
            self.fail(field, "must not be empty".into());
        }
        if let Some(n) = ns.iter().find(|n| **n < 2) {
            self.fail(field, format!("particle counts must be >= 2, got {n}"));
        }
    }

    fn time(&mut self, field: &str, t: f64) {
        if !(t >= 0.0 && t.is_finite()) {
            self.fail(field, format!("must be finite and >= 0, got {t}"));
        }
    }

    fn times(&mut self, field: &str, ts: &[f64]) {
        if ts.is_empty() {
            self.fail(field, "must not be empty".into());
        }
        if ts.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            self.fail(field, "must be finite and >= 0".into());
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            self.fail(field, "must increase strictly".into());
        }
    }

    fn positive(&mut self, field: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.fail(field, format!("must be positive and finite, got {x}"));
        }
    }
}

fn study_checks(study: &StudySpec, c: &mut Checks) {
    match study {
        StudySpec::Simulate(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            c.time("study.t_final", s.t_final);
            if !s.snapshot_times.is_empty() {
                c.times("study.snapshot_times", &s.snapshot_times);
            }
            if s.snapshot_times.iter().any(|t| *t > s.t_final) {
                c.fail("study.snapshot_times", "must not exceed t_final".into());
            }
        }
        StudySpec::Convergence(s) | StudySpec::UniformTime(s) => {
            for v in s.violations() {
                c.0.push(format!("study.{v}"));
            }
        }
        StudySpec::Baseline(s) => {
            c.dim(s.dim);
            c.particles("study.n_list", &s.n_list);
            c.at_least("study.replicas", s.replicas, 2);
        }
        StudySpec::Conservation(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            if s.checkpoints == 0 {
                c.fail("study.checkpoints", "must be >= 1".into());
            }
        }
        StudySpec::Generator(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            c.at_least("study.replicas", s.replicas, 2);
            c.at_least("study.sigma_draws", s.sigma_draws, 1);
            c.positive("study.h", s.h);
        }
        StudySpec::Moments(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            c.at_least("study.replicas", s.replicas, 2);
            c.times("study.times", &s.times);
        }
        StudySpec::Recurrence(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            c.at_least("study.calibration_samples", s.calibration_samples, 2);
            c.at_least("study.batches", s.batches, 1);
            if !(s.target_p > 0.0 && s.target_p < 1.0) {
                c.fail("study.target_p", format!("must lie in (0, 1), got {}", s.target_p));
            }
        }
        StudySpec::Relaxation(s) => {
            c.dim(s.dim);
            c.at_least("study.n", s.n, 2);
            c.at_least("study.replicas", s.replicas, 2);
            c.times("study.times", &s.times);
        }
        StudySpec::Chaos(s) => {
            c.dim(s.dim);
            c.particles("study.n_list", &s.n_list);
            c.at_least("study.replicas", s.replicas, 4);
            c.time("study.t", s.t);
        }
        StudySpec::Nonchaotic(s) => {
            c.dim(s.dim);
            c.particles("study.n_list", &s.n_list);
            c.at_least("study.replicas", s.replicas, 2);
            c.at_least("study.design_points", s.design_points, 2);
            if let Some(n) = s.n_list.iter().find(|n| **n % (1 << s.dim.min(30)) != 0) {
                c.fail("study.n_list", format!("{n} is not a multiple of 2^dim"));
            }
        }
        StudySpec::Branching(s) => {
            c.dim(s.dim);
            c.at_least("study.env_n", s.env_n, 2);
            c.at_least("study.n_trees", s.n_trees, 2);
            c.positive("study.snapshot_step", s.snapshot_step);
            c.positive("study.horizon", s.horizon);
            if s.starts.iter().any(|v| v.len() != s.dim) {
                c.fail("study.starts", format!("every start must have {} components", s.dim));
            }
        }
        StudySpec::Representation(s) => {
            c.dim(s.dim);
            c.at_least("study.support", s.support, 2);
            c.at_least("study.replicas", s.replicas, 2);
            c.at_least("study.n_trees", s.n_trees, 2);
            c.positive("study.t", s.t);
            if s.support > 0 && s.ensemble_n % s.support != 0 {
                c.fail("study.ensemble_n", "must be a multiple of support".into());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::parse(r#"{"study": {"kind": "conservation"}}"#).unwrap();
        assert_eq!(cfg.study, StudySpec::Conservation(ConservationConfig::default()));
        assert_eq!(cfg.seed_scheme, SEED_SCHEME);
    }

    #[test]
    fn single_particle_is_rejected_by_name() {
        let err = RunConfig::parse(r#"{"study": {"kind": "simulate", "n": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("study.n"), "{err}");
    }

    #[test]
    fn all_violations_are_listed() {
        let err =
            RunConfig::parse(r#"{"study": {"kind": "simulate", "n": 1, "dim": 1, "t_final": -1.0}}"#).unwrap_err();
        match err {
            KacError::Config(v) => assert_eq!(v.len(), 3, "{v:?}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse(r#"{"study": {"kind": "simulate", "nn": 3}}"#).is_err());
        assert!(RunConfig::parse(r#"{"sed": 1, "study": {"kind": "simulate"}}"#).is_err());
        assert!(RunConfig::parse(r#"{"study": {"kind": "nonsense"}}"#).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        for kind in [
            "simulate",
            "convergence",
            "uniform_time",
            "baseline",
            "conservation",
            "generator",
            "moments",
            "recurrence",
            "relaxation",
            "chaos",
            "nonchaotic",
            "branching",
            "representation",
        ] {
            let mut cfg = RunConfig::new(StudySpec::default_for(kind).unwrap());
            cfg.seed = 99;
            cfg.out = Some("results".into());
            let text = cfg.emit();
            let back = RunConfig::parse(&text).unwrap();
            assert_eq!(back, cfg, "{kind}");
            assert_eq!(back.emit(), text, "{kind}");
        }
    }
}
