use kaclab_core::experiments::{chaotic_init, conservation_study, ConservationConfig, InitialLaw};
use kaclab_core::io::{
    read_event_log_csv, read_measure_csv, read_snapshot_csv, write_event_log_csv, write_measure_csv, write_report,
    write_snapshot_csv,
};
use kaclab_core::kac::{replay, simulate, Observable, ObservationPlan, SamplerKind};
use kaclab_core::metrics::wasserstein_lp;
use kaclab_core::rng::{stream, tags};
use kaclab_core::WeightedPointCloud;

#[test]
fn trajectory_survives_the_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s0 = chaotic_init(&InitialLaw::Maxwellian, 64, 3, &mut stream(5, 0, tags::INIT)).unwrap();
    let plan = ObservationPlan { times: vec![0.5, 1.0], observables: vec![Observable::Energy], snapshots: true };
    let (traj, series) = simulate(&s0, 1.0, &plan, SamplerKind::SpeedThinning, stream(5, 0, tags::DYNAMICS)).unwrap();
    assert!(!traj.events.is_empty());

    write_snapshot_csv(&dir.path().join("s0.csv"), &traj.initial, 0.0, 5).unwrap();
    write_event_log_csv(&dir.path().join("events.csv"), &traj.events, 3).unwrap();
    let (header, initial) = read_snapshot_csv(&dir.path().join("s0.csv")).unwrap();
    assert_eq!((header.n, header.dim, header.seed), (64, 3, 5));
    let events = read_event_log_csv(&dir.path().join("events.csv")).unwrap();
    let end = replay(&initial, &events).unwrap();
    assert_eq!(end.as_flat(), traj.final_state.as_flat());
    assert_eq!(series.snapshots.last().unwrap().as_flat(), end.as_flat());
}

#[test]
fn measure_files_feed_the_metric() {
    let dir = tempfile::tempdir().unwrap();
    let a = WeightedPointCloud::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0], vec![0.5, 0.5]).unwrap();
    let b = WeightedPointCloud::new(3, vec![0.0, 1.0, 0.0], vec![1.0]).unwrap();
    write_measure_csv(&dir.path().join("a.csv"), &a).unwrap();
    write_measure_csv(&dir.path().join("b.csv"), &b).unwrap();
    let a2 = read_measure_csv(&dir.path().join("a.csv")).unwrap();
    let b2 = read_measure_csv(&dir.path().join("b.csv")).unwrap();
    assert_eq!(wasserstein_lp(&a, &b).unwrap().value, wasserstein_lp(&a2, &b2).unwrap().value);
}

#[test]
fn reports_are_reproducible_on_disk() {
    let cfg = ConservationConfig { n: 32, events: 20_000, checkpoints: 4, ..ConservationConfig::default() };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let bytes: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let r = conservation_study(&cfg, 11).unwrap();
            assert!(r.passed());
            std::fs::read(write_report(d.path(), &r).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(bytes[0], bytes[1]);
    let other = conservation_study(&cfg, 12).unwrap().to_json();
    assert_ne!(String::from_utf8(bytes[0].clone()).unwrap().trim_end(), other);
}
