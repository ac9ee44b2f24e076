//! Acceptance suite. Runs every check at full scale and prints one line per
//! criterion. Positional arguments select criteria by substring.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use kaclab_core::experiments::{
    baseline_study, branching_study, conservation_study, convergence_study, generator_study, moment_study,
    nonchaotic_study, recurrence_study, representation_study, uniform_time_study, BaselineConfig, BranchingConfig,
    ConservationConfig, ConvergenceConfig, GeneratorConfig, MomentConfig, NonchaoticConfig, RecurrenceConfig,
    RepresentationConfig, StudyReport,
};
use kaclab_core::metrics::{dyadic_upper_bound, reweight, w1_ot, wasserstein_lower_witness, wasserstein_lp};
use kaclab_core::rng::stream;
use kaclab_core::WeightedPointCloud;

const SEED: u64 = 20_240_917;

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_report(r: &StudyReport) -> Outcome {
    let detail = r
        .verdicts
        .iter()
        .map(|v| format!("{}={:.4e}{}", v.check, v.value, if v.passed { "" } else { "(x)" }))
        .collect::<Vec<_>>()
        .join(" ");
    Outcome { passed: r.passed(), detail }
}

fn random_cloud<R: Rng>(rng: &mut R, m: usize, dim: usize, centre: &[f64], scale: f64) -> WeightedPointCloud {
    let pts: Vec<f64> = (0..m * dim).map(|k| centre[k % dim] + scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    WeightedPointCloud::new(dim, pts, w.into_iter().map(|x| x / total).collect()).unwrap()
}

fn ball_cloud<R: Rng>(rng: &mut R, m: usize) -> WeightedPointCloud {
    let mut pts = Vec::with_capacity(3 * m);
    while pts.len() < 3 * m {
        let v: [f64; 3] = std::array::from_fn(|_| 2.0 * rng.random::<f64>() - 1.0);
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            pts.extend_from_slice(&v);
        }
    }
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    WeightedPointCloud::new(3, pts, w.into_iter().map(|x| x / total).collect()).unwrap()
}

fn conservation() -> Outcome {
    from_report(&conservation_study(&ConservationConfig::default(), SEED).unwrap())
}

fn generator() -> Outcome {
    from_report(&generator_study(&GeneratorConfig::default(), SEED).unwrap())
}

fn metric_identity() -> Outcome {
    let mut rng = stream(SEED, 3, 0);
    let mut worst = 0.0_f64;
    let mut bad = 0;
    for _ in 0..1000 {
        let (m, k) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let a = ball_cloud(&mut rng, m);
        let b = ball_cloud(&mut rng, k);
        let gap = (w1_ot(&a, &b).unwrap() - wasserstein_lp(&reweight(&a), &reweight(&b)).unwrap().value).abs();
        worst = worst.max(gap);
        bad += usize::from(gap > 1e-6);
    }
    let mut gauss_gaps = 0;
    let mut bl_above = 0;
    for _ in 0..200 {
        let (m, k) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let a = random_cloud(&mut rng, m, 3, &[0.0; 3], 1.0);
        let b = random_cloud(&mut rng, k, 3, &[0.0; 3], 1.0);
        let w1 = w1_ot(&a, &b).unwrap();
        let bl = wasserstein_lp(&reweight(&a), &reweight(&b)).unwrap().value;
        gauss_gaps += usize::from((w1 - bl).abs() > 1e-6);
        bl_above += usize::from(bl > w1 + 1e-9);
    }
    Outcome {
        passed: bad == 0,
        detail: format!(
            "unit-ball pairs=1000 over_tol={bad} worst={worst:.2e}; gaussian pairs=200 differing={gauss_gaps} bl_above_w1={bl_above}"
        ),
    }
}

fn bracketing() -> Outcome {
    let mut rng = stream(SEED, 4, 0);
    let mut violations = 0;
    for _ in 0..1000 {
        let shift = [rng.random::<f64>(), 0.0, 0.0];
        let (m, k, scale) = (rng.random_range(2..=150), rng.random_range(2..=150), 0.5 + rng.random::<f64>());
        let a = random_cloud(&mut rng, m, 3, &[0.0; 3], 1.0);
        let b = random_cloud(&mut rng, k, 3, &shift, scale);
        let exact = wasserstein_lp(&a, &b).unwrap().value;
        let upper = dyadic_upper_bound(&a, &b, 8, 8).unwrap().upper;
        let lower = wasserstein_lower_witness(&a, &b, 100, &mut rng).unwrap().value;
        let slack = 1e-9 * (1.0 + exact);
        violations += usize::from(upper < exact - slack || lower > exact + slack);
    }
    let ratio = |rng: &mut kaclab_core::rng::SimRng, shift: f64, scale: f64| {
        let dir: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let centre: Vec<f64> = dir.iter().map(|x| shift * x / len).collect();
        let a = random_cloud(rng, 500, 3, &[0.0; 3], 1.0);
        let b = random_cloud(rng, 500, 3, &centre, scale);
        let exact = wasserstein_lp(&a, &b).unwrap().value;
        wasserstein_lower_witness(&a, &b, 100, rng).unwrap().value / exact
    };
    let mut worst_ratio = 1.0_f64;
    for _ in 0..20 {
        let (shift, scale) = (0.5 + rng.random::<f64>(), 0.7 + 0.8 * rng.random::<f64>());
        worst_ratio = worst_ratio.min(ratio(&mut rng, shift, scale));
    }
    let same_law = (0..5).map(|_| ratio(&mut rng, 0.0, 1.0)).fold(1.0_f64, f64::min);
    Outcome {
        passed: violations == 0 && worst_ratio >= 0.9,
        detail: format!(
            "instances=1000 violations={violations}; witness/exact min over 20 gaussian pairs={worst_ratio:.4} (same-law pairs, informational: {same_law:.4})"
        ),
    }
}

fn moments() -> Outcome {
    from_report(&moment_study(&MomentConfig::default(), SEED).unwrap())
}

/// Convergence-rate report, kept for the determinism check.
static CONVERGENCE_JSON: OnceLock<String> = OnceLock::new();

fn convergence() -> Outcome {
    let r = convergence_study(&ConvergenceConfig::default(), SEED).unwrap();
    let _ = CONVERGENCE_JSON.set(r.to_json());
    from_report(&r)
}

fn uniform_time() -> Outcome {
    from_report(&uniform_time_study(&ConvergenceConfig::uniform_time(), SEED).unwrap())
}

fn baseline() -> Outcome {
    from_report(&baseline_study(&BaselineConfig::default(), SEED).unwrap())
}

fn branching() -> Outcome {
    from_report(&branching_study(&BranchingConfig::default(), SEED).unwrap())
}

fn representation() -> Outcome {
    let r = representation_study(&RepresentationConfig::default(), SEED).unwrap();
    let mut o = from_report(&r);
    let get = |q: &str| r.cell(q, None, Some(0.25)).map_or(f64::NAN, |c| c.mean);
    o.detail = format!("lhs={:.5} rhs={:.5} {}", get("lhs"), get("rhs"), o.detail);
    o
}

fn recurrence() -> Outcome {
    from_report(&recurrence_study(&RecurrenceConfig::default(), SEED).unwrap())
}

fn nonchaotic() -> Outcome {
    from_report(&nonchaotic_study(&NonchaoticConfig::default(), SEED).unwrap())
}

fn determinism() -> Outcome {
    let cfg = ConvergenceConfig::default();
    let a = CONVERGENCE_JSON.get_or_init(|| convergence_study(&cfg, SEED).unwrap().to_json());
    let b = convergence_study(&cfg, SEED).unwrap().to_json();
    Outcome { passed: *a == b, detail: format!("report bytes {} vs {}", a.len(), b.len()) }
}

fn main() -> ExitCode {
    #[allow(clippy::type_complexity)]
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("01_conservation", conservation),
        ("02_generator", generator),
        ("03_metric_identity", metric_identity),
        ("04_bracketing", bracketing),
        ("05_moments", moments),
        ("06_convergence_rate", convergence),
        ("07_uniform_in_time", uniform_time),
        ("08_iid_baseline", baseline),
        ("09_branching", branching),
        ("10_representation", representation),
        ("11_recurrence", recurrence),
        ("12_nonchaotic", nonchaotic),
        ("13_determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name} ({secs:.1}s) {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
