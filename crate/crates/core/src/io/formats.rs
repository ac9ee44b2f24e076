use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::experiments::StudyReport;
use crate::kac::{CollisionEvent, ObservableSeries};
use crate::kinetic::ParticleState;
use crate::linearized::{Environment, FstEstimate};
use crate::measure::WeightedPointCloud;

/// Writes `bytes` next to `path` and renames into place.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().ok_or_else(|| KacError::InvalidArgument(format!("no file name in {path:?}")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn velocity_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("v{k}")).collect()
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| KacError::Io(e.into_error()))
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| KacError::Parse(format!("bad {what} {s:?}")))
}

fn header_dim(headers: &csv::StringRecord, prefix: &str) -> usize {
    headers.iter().take_while(|h| h.starts_with(prefix) && h[prefix.len()..].parse::<usize>().is_ok()).count()
}

/// Measure CSV: columns `v1..vd,weight`.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_measure_csv(path: &Path, mu: &WeightedPointCloud) -> Result<()> {
    let mut header = velocity_header(mu.dim());
    header.push("weight".into());
    let rows = mu.iter().map(|(x, w)| x.iter().copied().chain([w]).map(num).collect());
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// # Errors
///
/// Missing `weight` column, ragged or non-numeric rows.
pub fn read_measure_csv(path: &Path) -> Result<WeightedPointCloud> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let dim = header_dim(&headers, "v");
    if headers.len() != dim + 1 || &headers[dim] != "weight" {
        return Err(KacError::Parse(format!("{path:?}: expected columns v1..vd,weight")));
    }
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        for k in 0..dim {
            pts.push(parse_num(&rec[k], "coordinate")?);
        }
        ws.push(parse_num(&rec[dim], "weight")?);
    }
    WeightedPointCloud::new(dim, pts, ws)
}

/// Metadata line of a snapshot file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub n: usize,
    pub dim: usize,
    pub time: f64,
    pub seed: u64,
}

/// Snapshot CSV: a `# N=..,d=..,time=..,seed=..` line, then `v1..vd` rows.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_snapshot_csv(path: &Path, state: &ParticleState, time: f64, seed: u64) -> Result<()> {
    let mut out = format!("# N={},d={},time={},seed={}\n", state.len(), state.dim(), num(time), seed).into_bytes();
    let rows = state.velocities().map(|v| v.iter().copied().map(num).collect());
    out.extend(csv_bytes(&velocity_header(state.dim()), rows)?);
    write_atomic(path, &out)
}

/// # Errors
///
/// Malformed header line or rows, or counts disagreeing with the header.
pub fn read_snapshot_csv(path: &Path) -> Result<(SnapshotHeader, ParticleState)> {
    let text = fs::read_to_string(path)?;
    let (first, body) = text.split_once('\n').ok_or_else(|| KacError::Parse(format!("{path:?}: empty")))?;
    let meta =
        first.strip_prefix("# ").ok_or_else(|| KacError::Parse(format!("{path:?}: missing '# N=..' header line")))?;
    let mut fields = std::collections::HashMap::new();
    for part in meta.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| KacError::Parse(format!("bad header field {part:?}")))?;
        fields.insert(k.trim(), v.trim());
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| KacError::Parse(format!("header lacks {k}")));
    let bad = |k: &str| KacError::Parse(format!("bad header value for {k}"));
    let header = SnapshotHeader {
        n: get("N")?.parse().map_err(|_| bad("N"))?,
        dim: get("d")?.parse().map_err(|_| bad("d"))?,
        time: parse_num(get("time")?, "time")?,
        seed: get("seed")?.parse().map_err(|_| bad("seed"))?,
    };
    let mut r = csv::Reader::from_reader(body.as_bytes());
    if header_dim(r.headers()?, "v") != header.dim {
        return Err(KacError::Parse(format!("{path:?}: column count disagrees with d={}", header.dim)));
    }
    let mut data = Vec::with_capacity(header.n * header.dim);
    for rec in r.records() {
        for x in &rec? {
            data.push(parse_num(x, "velocity")?);
        }
    }
    if data.len() != header.n * header.dim {
        return Err(KacError::Parse(format!("{path:?}: expected {} rows", header.n)));
    }
    Ok((header, ParticleState::from_flat(header.dim, data)?))
}

/// Event log CSV: `event_index,time,i,j,sigma1..sigmad`.
///
/// # Errors
///
/// Filesystem failures, or events of mixed dimension.
pub fn write_event_log_csv(path: &Path, events: &[CollisionEvent], dim: usize) -> Result<()> {
    let mut header: Vec<String> = ["event_index", "time", "i", "j"].iter().map(|s| (*s).to_string()).collect();
    header.extend((1..=dim).map(|k| format!("sigma{k}")));
    if let Some(e) = events.iter().find(|e| e.sigma.len() != dim) {
        return Err(KacError::DimensionMismatch { expected: dim, found: e.sigma.len() });
    }
    let rows = events.iter().enumerate().map(|(k, e)| {
        let mut r = vec![k.to_string(), num(e.time), e.i.to_string(), e.j.to_string()];
        r.extend(e.sigma.iter().copied().map(num));
        r
    });
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// # Errors
///
/// Malformed rows or out-of-order event indices.
pub fn read_event_log_csv(path: &Path) -> Result<Vec<CollisionEvent>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "event_index" || &headers[1] != "time" {
        return Err(KacError::Parse(format!("{path:?}: expected event_index,time,i,j,sigma..")));
    }
    let dim = headers.len() - 4;
    let mut events = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let idx: usize = rec[0].parse().map_err(|_| KacError::Parse(format!("bad event index {:?}", &rec[0])))?;
        if idx != k {
            return Err(KacError::Parse(format!("event index {idx} out of order at row {k}")));
        }
        let pos = |s: &str| s.parse::<usize>().map_err(|_| KacError::Parse(format!("bad particle index {s:?}")));
        events.push(CollisionEvent {
            time: parse_num(&rec[1], "time")?,
            i: pos(&rec[2])?,
            j: pos(&rec[3])?,
            sigma: (0..dim).map(|c| parse_num(&rec[4 + c], "sigma")).collect::<Result<_>>()?,
        });
    }
    Ok(events)
}

/// JSON header of an environment directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentHeader {
    pub dim: usize,
    /// Piece boundaries; `null` stands for an unbounded last piece.
    pub times: Vec<Option<f64>>,
    /// Cloud files relative to the header.
    pub clouds: Vec<String>,
}

/// Writes `environment.json` plus one measure CSV per piece into `dir`.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_environment(dir: &Path, env: &Environment) -> Result<PathBuf> {
    let mut clouds = Vec::new();
    for (k, c) in env.clouds().enumerate() {
        let name = format!("cloud_{k:04}.csv");
        write_measure_csv(&dir.join(&name), c)?;
        clouds.push(name);
    }
    let header = EnvironmentHeader {
        dim: env.dim(),
        times: env.times().iter().map(|t| t.is_finite().then_some(*t)).collect(),
        clouds,
    };
    let path = dir.join("environment.json");
    write_atomic(&path, &json_bytes(&header)?)?;
    Ok(path)
}

/// # Errors
///
/// Malformed header or cloud files, or as [`Environment::new`].
pub fn read_environment(path: &Path) -> Result<Environment> {
    let header: EnvironmentHeader = serde_json::from_str(&fs::read_to_string(path)?)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let clouds = header.clouds.iter().map(|c| read_measure_csv(&dir.join(c))).collect::<Result<Vec<_>>>()?;
    if let Some(c) = clouds.iter().find(|c| c.dim() != header.dim) {
        return Err(KacError::DimensionMismatch { expected: header.dim, found: c.dim() });
    }
    Environment::new(header.times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect(), clouds)
}

/// Estimator record `{f_id, v0, s, t, estimate, se, n_trees, discard_fraction}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRecord {
    pub f_id: String,
    pub v0: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub estimate: f64,
    pub se: f64,
    pub n_trees: usize,
    pub discard_fraction: f64,
}

impl EstimatorRecord {
    #[must_use]
    pub fn new(f_id: &str, e: &FstEstimate) -> Self {
        Self {
            f_id: f_id.to_string(),
            v0: e.v0.clone(),
            s: e.s,
            t: e.t,
            estimate: e.estimate.mean,
            se: e.estimate.se,
            n_trees: e.n_trees,
            discard_fraction: e.discard_fraction,
        }
    }
}

/// Metric record `{metric, value, J, L, support_sizes, runtime_ms}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    #[serde(rename = "J")]
    pub scales: Option<u32>,
    #[serde(rename = "L")]
    pub depth: Option<u32>,
    pub support_sizes: [usize; 2],
    pub runtime_ms: f64,
}

impl MetricRecord {
    #[must_use]
    pub fn new(metric: &str, value: f64, supports: [usize; 2], elapsed: Duration) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            scales: None,
            depth: None,
            support_sizes: supports,
            runtime_ms: elapsed.as_secs_f64() * 1e3,
        }
    }
}

/// Writes observables on the grid as `time,<name>,...`.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_series_csv(path: &Path, series: &ObservableSeries) -> Result<()> {
    let header: Vec<String> = std::iter::once("time".to_string()).chain(series.names.iter().cloned()).collect();
    let rows = series
        .times
        .iter()
        .zip(&series.values)
        .map(|(t, row)| std::iter::once(*t).chain(row.iter().copied()).map(num).collect());
    write_atomic(path, &csv_bytes(&header, rows)?)
}

/// Pretty JSON with a trailing newline.
///
/// # Errors
///
/// Serialisation failures.
pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes `report.json` plus `cells.csv`, `fits.csv` and `verdicts.csv`
/// into `dir` and returns the JSON path.
///
/// # Errors
///
/// Filesystem failures.
pub fn write_report(dir: &Path, report: &StudyReport) -> Result<PathBuf> {
    let s = |xs: &[&str]| xs.iter().map(|x| (*x).to_string()).collect::<Vec<_>>();
    let cells = report
        .cells
        .iter()
        .map(|c| vec![c.quantity.clone(), opt(c.n), opt_num(c.t), num(c.mean), num(c.se), c.replicas.to_string()]);
    write_atomic(&dir.join("cells.csv"), &csv_bytes(&s(&["quantity", "n", "t", "mean", "se", "replicas"]), cells)?)?;
    let fits = report.fits.iter().map(|f| {
        vec![
            f.name.clone(),
            num(f.slope),
            num(f.slope_se),
            num(f.intercept),
            num(f.slope_interval.0),
            num(f.slope_interval.1),
        ]
    });
    let fit_header = s(&["name", "slope", "slope_se", "intercept", "slope_low", "slope_high"]);
    write_atomic(&dir.join("fits.csv"), &csv_bytes(&fit_header, fits)?)?;
    let verdicts = report
        .verdicts
        .iter()
        .map(|v| vec![v.check.clone(), num(v.value), opt_num(v.lower), opt_num(v.upper), v.passed.to_string()]);
    write_atomic(
        &dir.join("verdicts.csv"),
        &csv_bytes(&s(&["check", "value", "lower", "upper", "passed"]), verdicts)?,
    )?;
    let path = dir.join("report.json");
    let mut text = report.to_json().into_bytes();
    text.push(b'\n');
    write_atomic(&path, &text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let mu = WeightedPointCloud::new(2, vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0], vec![0.25, 0.75]).unwrap();
        write_measure_csv(&p, &mu).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("v1,v2,weight\n"));
        assert_eq!(read_measure_csv(&p).unwrap(), mu);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = ParticleState::from_flat(3, (0..12).map(|k| f64::from(k) * 0.1 - 0.5).collect()).unwrap();
        write_snapshot_csv(&p, &s, 0.75, 42).unwrap();
        let (h, back) = read_snapshot_csv(&p).unwrap();
        assert_eq!(h, SnapshotHeader { n: 4, dim: 3, time: 0.75, seed: 42 });
        assert_eq!(back.as_flat(), s.as_flat());
    }

    #[test]
    fn event_log_round_trip_and_checks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let ev = vec![
            CollisionEvent { time: 0.5, i: 0, j: 3, sigma: vec![0.6, 0.8, 0.0] },
            CollisionEvent { time: 0.9, i: 1, j: 2, sigma: vec![0.0, 0.0, -1.0] },
        ];
        write_event_log_csv(&p, &ev, 3).unwrap();
        assert_eq!(read_event_log_csv(&p).unwrap(), ev);
        fs::write(&p, "event_index,time,i,j,sigma1,sigma2\n1,0.1,0,1,1,0\n").unwrap();
        assert!(read_event_log_csv(&p).is_err());
    }

    #[test]
    fn environment_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = |x: f64| WeightedPointCloud::new(2, vec![x, 0.0, -x, 0.0], vec![0.5, 0.5]).unwrap();
        let env = Environment::new(vec![0.0, 0.5, f64::INFINITY], vec![c(1.0), c(2.0)]).unwrap();
        let path = write_environment(dir.path(), &env).unwrap();
        let back = read_environment(&path).unwrap();
        assert_eq!(back.times(), env.times());
        assert!(back.clouds().zip(env.clouds()).all(|(a, b)| a == b));
    }

    #[test]
    fn report_tables_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = StudyReport::new("demo", 1, &serde_json::json!({"a": 1}));
        r.push_value("w", Some(8), Some(1.0), 0.5);
        let p = write_report(dir.path(), &r).unwrap();
        let back: StudyReport = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(back, r);
        let cells = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
        assert_eq!(cells, "quantity,n,t,mean,se,replicas\nw,8,1.0,0.5,0.0,1\n");
    }
}
