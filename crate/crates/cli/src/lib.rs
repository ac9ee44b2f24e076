//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 a study ran but
//! at least one verdict failed. Errors go to stderr as one JSON object
//! `{"error": <kind>, "message": ..., "details": [...]}`.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kaclab_core::experiments::{
    baseline_study, branching_study, chaos_diagnostic, conservation_study, convergence_study, generator_study,
    moment_study, nonchaotic_study, recurrence_study, relaxation_panel, relaxation_study, representation_study,
    tanh_test_function, uniform_time_study, StudyReport,
};
use kaclab_core::io::{
    json_bytes, parse_config, read_environment, read_measure_csv, read_snapshot_csv, write_atomic, write_environment,
    write_event_log_csv, write_report, write_series_csv, write_snapshot_csv, EstimatorRecord, MetricRecord, RunConfig,
    SimulateConfig, StudySpec,
};
use kaclab_core::kac::{simulate, Observable, ObservationPlan};
use kaclab_core::kinetic::{norm_sq, ParticleState};
use kaclab_core::linearized::{estimate_fst, Environment, TreeOptions};
use kaclab_core::metrics::{dyadic_upper_bound, w1_ot, wasserstein_lower_witness, wasserstein_lp};
use kaclab_core::rng::{stream, tags};
use kaclab_core::{KacError, WeightedPointCloud};

const THREADS_ENV: &str = "KACLAB_THREADS";
const DEFAULT_OUT: &str = "kaclab-out";

#[derive(Parser, Debug)]
#[command(name = "kaclab", version, about = "Kac particle systems, Wasserstein-type metrics and branching estimators")]
struct Cli {
    /// Worker threads (falls back to the config, then KACLAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for simulate/study, output file for metric/branch.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Record format for metric/branch output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one Kac system and write snapshots, events and observables.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a named study and write its report.
    Study {
        kind: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Distance between two measure CSV files.
    Metric(MetricArgs),
    /// Branching-tree estimate of a propagated test function.
    Branch(BranchArgs),
    /// Print the default config for a study kind.
    Config { kind: String },
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("method").required(true).args(["exact", "dyadic", "witness", "w1"])))]
struct MetricArgs {
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Exact value by linear programming.
    #[arg(long)]
    exact: bool,
    /// Dyadic upper bound with J scales and depth L.
    #[arg(long, num_args = 2, value_names = ["J", "L"])]
    dyadic: Option<Vec<u32>>,
    /// Lower bound from a subsample of S points.
    #[arg(long, value_name = "S")]
    witness: Option<usize>,
    /// Optimal transport W1 with unit cost.
    #[arg(long)]
    w1: bool,
}

#[derive(Args, Debug)]
struct BranchArgs {
    /// environment.json written by the library.
    #[arg(long)]
    env: PathBuf,
    /// Starting velocity, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    v0: Vec<f64>,
    /// Start time (defaults to the environment start).
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 10_000)]
    trees: usize,
    /// Test function: tanh, one, energy, or a relaxation panel name.
    #[arg(long, default_value = "tanh")]
    f: String,
}

/// Error with a machine-readable kind.
#[derive(Debug)]
struct Failure {
    kind: String,
    message: String,
    details: Vec<String>,
    code: i32,
}

impl From<KacError> for Failure {
    fn from(e: KacError) -> Self {
        let details = match &e {
            KacError::Config(v) => v.clone(),
            _ => Vec::new(),
        };
        Self { kind: e.kind().into(), message: e.to_string(), details, code: 1 }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "usage".into(), message: message.into(), details: Vec::new(), code: 2 }
}

type Outcome = std::result::Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report(&usage(e.to_string().trim_end()));
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(f) => report(&f),
    }
}

fn report(f: &Failure) -> i32 {
    let body = serde_json::json!({ "error": f.kind, "message": f.message, "details": f.details });
    eprintln!("{body}");
    f.code
}

fn threads(flag: Option<usize>, config: Option<usize>) -> std::result::Result<Option<usize>, Failure> {
    if let Some(n) = flag.or(config) {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn in_pool<F: FnOnce() -> Outcome + Send>(n: Option<usize>, job: F) -> Outcome {
    match n {
        Some(0) => Err(usage("threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Failure {
                kind: "threads".into(),
                message: e.to_string(),
                details: Vec::new(),
                code: 1,
            })?;
            pool.install(job)
        }
        None => job(),
    }
}

fn load(path: Option<&Path>, kind: &str) -> std::result::Result<RunConfig, Failure> {
    let cfg = match path {
        Some(p) => parse_config(p)?,
        None => {
            RunConfig::new(StudySpec::default_for(kind).ok_or_else(|| usage(format!("unknown study kind {kind:?}")))?)
        }
    };
    if cfg.study.kind() != kind {
        return Err(usage(format!("config describes a {:?} study, expected {kind:?}", cfg.study.kind())));
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Outcome {
    let Cli { threads: flag, seed, out, format, command } = cli;
    match command {
        Command::Config { kind } => {
            let spec = StudySpec::default_for(&kind).ok_or_else(|| usage(format!("unknown study kind {kind:?}")))?;
            print!("{}", RunConfig::new(spec).emit());
            Ok(0)
        }
        Command::Simulate { config } => run_config(load(config.as_deref(), "simulate")?, flag, seed, out),
        Command::Study { kind, config } => run_config(load(config.as_deref(), &kind)?, flag, seed, out),
        Command::Metric(args) => {
            let n = threads(flag, None)?;
            in_pool(n, || emit_record(&metric(&args, seed.unwrap_or(0))?, out.as_deref(), format))
        }
        Command::Branch(args) => {
            let n = threads(flag, None)?;
            in_pool(n, || emit_record(&branch(&args, seed.unwrap_or(0))?, out.as_deref(), format))
        }
    }
}

fn run_config(mut cfg: RunConfig, flag: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Outcome {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.out = out;
    }
    cfg.threads = threads(flag, cfg.threads)?;
    cfg.validate()?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir).map_err(KacError::from)?;
    write_atomic(&dir.join("config.json"), cfg.emit().as_bytes())?;
    in_pool(cfg.threads, || match &cfg.study {
        StudySpec::Simulate(sim) => {
            run_simulation(sim, cfg.seed, &dir)?;
            Ok(0)
        }
        spec => {
            let report = run_study(spec, cfg.seed)?;
            let path = write_report(&dir, &report)?;
            for v in &report.verdicts {
                println!("{} {} value={:?}", if v.passed { "PASS" } else { "FAIL" }, v.check, v.value);
            }
            println!("report: {}", path.display());
            Ok(if report.passed() { 0 } else { 3 })
        }
    })
}

fn run_study(spec: &StudySpec, seed: u64) -> kaclab_core::Result<StudyReport> {
    match spec {
        StudySpec::Convergence(c) => convergence_study(c, seed),
        StudySpec::UniformTime(c) => uniform_time_study(c, seed),
        StudySpec::Baseline(c) => baseline_study(c, seed),
        StudySpec::Conservation(c) => conservation_study(c, seed),
        StudySpec::Generator(c) => generator_study(c, seed),
        StudySpec::Moments(c) => moment_study(c, seed),
        StudySpec::Recurrence(c) => recurrence_study(c, seed),
        StudySpec::Relaxation(c) => relaxation_study(c, seed),
        StudySpec::Chaos(c) => chaos_diagnostic(c, seed),
        StudySpec::Nonchaotic(c) => nonchaotic_study(c, seed),
        StudySpec::Branching(c) => branching_study(c, seed),
        StudySpec::Representation(c) => representation_study(c, seed),
        StudySpec::Simulate(_) => unreachable!("handled by run_config"),
    }
}

/// Writes `initial.csv`, `final.csv`, `snapshot_KKKK.csv` for each
/// requested time, `observables.csv`, `events.csv` if enabled, and
/// `environment/` built from the snapshots on the observation grid.
fn run_simulation(cfg: &SimulateConfig, seed: u64, dir: &Path) -> kaclab_core::Result<()> {
    let s0 = cfg.start.sample(cfg.n, cfg.dim, &mut stream(seed, 0, tags::INIT))?;
    let mut times = cfg.snapshot_times.clone();
    times.extend([0.0, cfg.t_final]);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let plan = ObservationPlan {
        times: times.clone(),
        observables: vec![
            Observable::Energy,
            Observable::MomentumNorm,
            Observable::Moment(2.0),
            Observable::Moment(3.0),
            Observable::Moment(4.0),
        ],
        snapshots: true,
    };
    let (traj, series) = simulate(&s0, cfg.t_final, &plan, cfg.sampler, stream(seed, 0, tags::DYNAMICS))?;
    write_snapshot_csv(&dir.join("initial.csv"), &traj.initial, 0.0, seed)?;
    write_snapshot_csv(&dir.join("final.csv"), &traj.final_state, cfg.t_final, seed)?;
    let mut k = 0;
    for (t, snap) in series.times.iter().zip(&series.snapshots) {
        if cfg.snapshot_times.contains(t) {
            write_snapshot_csv(&dir.join(format!("snapshot_{k:04}.csv")), snap, *t, seed)?;
            k += 1;
        }
    }
    write_series_csv(&dir.join("observables.csv"), &series)?;
    if cfg.log_events {
        write_event_log_csv(&dir.join("events.csv"), &traj.events, cfg.dim)?;
    }
    if times.len() > 1 {
        let pieces: Vec<Vec<ParticleState>> =
            series.snapshots[..times.len() - 1].iter().map(|s| vec![s.clone()]).collect();
        let env_dir = dir.join("environment");
        std::fs::create_dir_all(&env_dir)?;
        write_environment(&env_dir, &Environment::from_snapshots(times, &pieces)?)?;
    }
    println!("events={} t_final={:?} out={}", traj.events.len(), cfg.t_final, dir.display());
    Ok(())
}

/// Measure CSV, or a snapshot file read as its empirical measure.
fn read_cloud(path: &Path) -> kaclab_core::Result<WeightedPointCloud> {
    let head = std::fs::read(path)?;
    if head.starts_with(b"# ") {
        Ok(WeightedPointCloud::from_state(&read_snapshot_csv(path)?.1))
    } else {
        read_measure_csv(path)
    }
}

fn metric(args: &MetricArgs, seed: u64) -> std::result::Result<MetricRecord, Failure> {
    let mu = read_cloud(&args.mu)?;
    let nu = read_cloud(&args.nu)?;
    let supports = [mu.len(), nu.len()];
    let start = Instant::now();
    let record = if let Some(jl) = &args.dyadic {
        let b = dyadic_upper_bound(&mu, &nu, jl[0], jl[1])?;
        let mut r = MetricRecord::new("dyadic_upper", b.upper, supports, start.elapsed());
        r.scales = Some(jl[0]);
        r.depth = Some(jl[1]);
        r
    } else if let Some(s) = args.witness {
        let w = wasserstein_lower_witness(&mu, &nu, s, &mut stream(seed, 0, tags::METRIC))?;
        MetricRecord::new("witness_lower", w.value, supports, start.elapsed())
    } else if args.w1 {
        MetricRecord::new("w1", w1_ot(&mu, &nu)?, supports, start.elapsed())
    } else {
        MetricRecord::new("exact", wasserstein_lp(&mu, &nu)?.value, supports, start.elapsed())
    };
    Ok(record)
}

fn test_function(name: &str) -> Option<fn(&[f64]) -> f64> {
    match name {
        "tanh" => Some(tanh_test_function),
        "one" => Some(|_| 1.0),
        "energy" => Some(norm_sq),
        _ => relaxation_panel().into_iter().find(|(n, _)| *n == name).map(|(_, f)| f),
    }
}

fn branch(args: &BranchArgs, seed: u64) -> std::result::Result<EstimatorRecord, Failure> {
    let f = test_function(&args.f).ok_or_else(|| usage(format!("unknown test function {:?}", args.f)))?;
    let env = read_environment(&args.env)?;
    let s = args.s.unwrap_or(env.start());
    let e = estimate_fst(f, &args.v0, s, args.t, &env, TreeOptions::new(args.trees), &mut stream(seed, 0, tags::TREE))?;
    Ok(EstimatorRecord::new(&args.f, &e))
}

/// One CSV row from a JSON object; arrays become `name_1..name_k`.
fn flat_row(value: &serde_json::Value) -> (Vec<String>, Vec<String>) {
    let text = |v: &serde_json::Value| match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let mut header = Vec::new();
    let mut row = Vec::new();
    for (k, v) in value.as_object().into_iter().flatten() {
        if let serde_json::Value::Array(items) = v {
            for (i, x) in items.iter().enumerate() {
                header.push(format!("{k}_{}", i + 1));
                row.push(text(x));
            }
        } else {
            header.push(k.clone());
            row.push(text(v));
        }
    }
    (header, row)
}

fn emit_record<T: Serialize>(record: &T, out: Option<&Path>, format: Format) -> Outcome {
    let bytes = match format {
        Format::Json => json_bytes(record)?,
        Format::Csv => {
            let (header, row) = flat_row(&serde_json::to_value(record).map_err(KacError::from)?);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).map_err(KacError::from)?;
            w.write_record(&row).map_err(KacError::from)?;
            w.into_inner().map_err(|e| KacError::Io(e.into_error()))?
        }
    };
    match out {
        Some(p) => write_atomic(p, &bytes)?,
        None => std::io::stdout().write_all(&bytes).map_err(KacError::from)?,
    }
    Ok(0)
}
