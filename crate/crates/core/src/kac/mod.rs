//! Exact event-driven simulation of the N-particle Kac process.
//!
//! Each unordered pair collides at rate `2 |v_i - v_j| / N` and is scattered
//! by a uniform direction. Two exact samplers are provided, see
//! [`SamplerKind`].

mod process;
mod rates;
mod simulate;
mod thinning;

pub use process::{
    replay, CollisionEvent, CollisionObserver, CollisionRecord, KacProcess, SamplerKind, AUTO_THINNING_THRESHOLD,
    REFRESH_PERIOD,
};
pub use rates::{total_rate, PairRateIndex};
pub use simulate::{
    generator_drift, simulate, Observable, ObservableSeries, ObservationPlan, TestFunction, Trajectory,
};
pub use thinning::SpeedIndex;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::{dist, norm_sq, project_flat_to_boltzmann_sphere, Maxwellian, ParticleState};
    use crate::rng::{stream, SimRng};
    use crate::stats::Estimate;
    use rand::SeedableRng;

    fn sphere_state(n: usize, d: usize, seed: u64) -> ParticleState {
        let mut rng = SimRng::seed_from_u64(seed);
        let m = Maxwellian::new(d).unwrap();
        let mut data = vec![0.0; n * d];
        for v in data.chunks_exact_mut(d) {
            m.sample_into(&mut rng, v);
        }
        project_flat_to_boltzmann_sphere(d, data).unwrap()
    }

    #[test]
    fn two_opposite_particles_rate_two() {
        let s = ParticleState::from_flat(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        assert!((total_rate(&s).unwrap() - 2.0).abs() < 1e-15);
        assert!((PairRateIndex::from_state(&s).total_rate() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn equal_velocities_are_absorbing() {
        let s = ParticleState::from_flat(2, vec![0.3, 0.1, 0.3, 0.1, 0.3, 0.1]).unwrap();
        assert_eq!(total_rate(&s).unwrap(), 0.0);
        for kind in [SamplerKind::RowSums, SamplerKind::SpeedThinning] {
            let mut p = KacProcess::new(s.clone(), kind, stream(1, 0, 0));
            if kind == SamplerKind::RowSums {
                assert!(p.step(&mut ()).is_none());
            }
            p.advance_to(5.0, &mut ()).unwrap();
            assert_eq!(p.collisions(), 0);
            assert_eq!(p.state().as_flat(), s.as_flat());
        }
    }

    #[test]
    fn sphere_rates_bounded_by_two_n() {
        for seed in 0..20 {
            let n = 2 + seed as usize * 7;
            let s = sphere_state(n, 3, seed);
            assert!(total_rate(&s).unwrap() <= 2.0 * n as f64);
        }
    }

    #[test]
    fn single_pair_is_deterministic() {
        let s = ParticleState::from_flat(3, vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0]).unwrap();
        let mut p = KacProcess::new(s, SamplerKind::RowSums, stream(2, 0, 0));
        for _ in 0..10 {
            let e = p.step(&mut ()).unwrap();
            assert_eq!((e.i, e.j), (0, 1));
        }
    }

    #[test]
    fn pair_frequencies_follow_relative_speeds() {
        let s = ParticleState::from_flat(2, vec![1.0, 0.0, -1.0, 0.5, 0.0, 2.0, 0.3, -0.7, -0.2, -0.2]).unwrap();
        let idx = PairRateIndex::from_state(&s);
        let n = s.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += dist(s.velocity(i), s.velocity(j));
            }
        }
        let draws = 100_000;
        let mut counts = vec![0u64; n * n];
        let mut rng = stream(3, 0, 0);
        for _ in 0..draws {
            let (i, j) = idx.sample_pair(&s, &mut rng).unwrap();
            counts[i.min(j) * n + i.max(j)] += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                let p = dist(s.velocity(i), s.velocity(j)) / total;
                let se = (p * (1.0 - p) / f64::from(draws)).sqrt();
                let freq = counts[i * n + j] as f64 / f64::from(draws);
                assert!((freq - p).abs() <= 3.0 * se, "({i},{j}): {freq} vs {p}");
            }
        }
    }

    #[test]
    fn incremental_rows_match_scratch() {
        let s = sphere_state(60, 3, 4);
        let mut p = KacProcess::new(s, SamplerKind::RowSums, stream(4, 0, 0));
        for _ in 0..5 {
            p.run(f64::INFINITY, 4000, &mut ()).unwrap();
            assert!(p.refresh_index() < 1e-8);
        }
        let fresh = PairRateIndex::from_state(p.state());
        assert!((fresh.total_rate() - total_rate(p.state()).unwrap()).abs() < 1e-9 * fresh.total_rate());
    }

    #[test]
    fn collisions_conserve_momentum_and_energy() {
        for kind in [SamplerKind::RowSums, SamplerKind::SpeedThinning] {
            let s = sphere_state(40, 3, 5);
            let mut worst = 0.0_f64;
            let mut obs = |r: &CollisionRecord<'_>| {
                let e0 = norm_sq(r.before[0]) + norm_sq(r.before[1]);
                let e1 = norm_sq(r.after[0]) + norm_sq(r.after[1]);
                worst = worst.max((e1 - e0).abs() / e0.max(1e-300));
                for k in 0..3 {
                    let p0 = r.before[0][k] + r.before[1][k];
                    let p1 = r.after[0][k] + r.after[1][k];
                    worst = worst.max((p1 - p0).abs() / e0.sqrt().max(1e-300));
                }
            };
            let mut p = KacProcess::new(s, kind, stream(5, 0, 0));
            p.advance_to(50.0, &mut obs).unwrap();
            assert!(p.collisions() > 1000);
            assert!(worst < 1e-10, "{worst}");
            assert!(p.state().is_on_sphere(1e-10));
        }
    }

    #[test]
    fn zero_horizon_is_trivial() {
        let s = sphere_state(10, 3, 6);
        let plan = ObservationPlan { times: vec![0.0], observables: vec![Observable::Moment(2.0)], snapshots: true };
        let (traj, series) = simulate(&s, 0.0, &plan, SamplerKind::Auto, stream(6, 0, 0)).unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(traj.final_state, s);
        assert!((series.values[0][0] - 2.0).abs() < 1e-12);
        assert_eq!(series.snapshots[0], s);
    }

    #[test]
    fn energy_moment_constant_along_path() {
        let s = sphere_state(30, 3, 7);
        let times: Vec<f64> = (0..=20).map(|k| f64::from(k) * 0.25).collect();
        let plan = ObservationPlan {
            times,
            observables: vec![Observable::Moment(2.0), Observable::MomentumNorm, Observable::Energy],
            snapshots: false,
        };
        let (traj, series) = simulate(&s, 5.0, &plan, SamplerKind::RowSums, stream(7, 0, 0)).unwrap();
        assert!(!traj.events.is_empty());
        assert_eq!(series.values.len(), 21);
        for row in &series.values {
            assert!((row[0] - 2.0).abs() < 1e-10);
            assert!(row[1] < 1e-10);
            assert!((row[2] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn replay_is_bit_exact() {
        for kind in [SamplerKind::RowSums, SamplerKind::SpeedThinning] {
            let s = sphere_state(25, 3, 8);
            let plan = ObservationPlan::default();
            let (a, _) = simulate(&s, 3.0, &plan, kind, stream(8, 0, 0)).unwrap();
            let (b, _) = simulate(&s, 3.0, &plan, kind, stream(8, 0, 0)).unwrap();
            assert_eq!(a, b);
            let r = replay(&s, &a.events).unwrap();
            assert_eq!(r.as_flat(), a.final_state.as_flat());
            assert!(a.events.windows(2).all(|w| w[0].time < w[1].time));
            assert!(a.events.iter().all(|e| e.i < e.j));
        }
    }

    #[test]
    fn path_does_not_depend_on_grid() {
        let s = sphere_state(20, 2, 9);
        let coarse = ObservationPlan::default();
        let fine = ObservationPlan {
            times: (0..100).map(|k| f64::from(k) * 0.02).collect(),
            observables: vec![Observable::Energy],
            snapshots: false,
        };
        let (a, _) = simulate(&s, 2.0, &coarse, SamplerKind::RowSums, stream(9, 0, 0)).unwrap();
        let (b, _) = simulate(&s, 2.0, &fine, SamplerKind::RowSums, stream(9, 0, 0)).unwrap();
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn replay_rejects_bad_logs() {
        let s = sphere_state(4, 2, 10);
        let bad = [CollisionEvent { time: 0.1, i: 0, j: 9, sigma: vec![1.0, 0.0] }];
        assert!(replay(&s, &bad).is_err());
        let back = [
            CollisionEvent { time: 0.2, i: 0, j: 1, sigma: vec![1.0, 0.0] },
            CollisionEvent { time: 0.1, i: 0, j: 1, sigma: vec![1.0, 0.0] },
        ];
        assert!(replay(&s, &back).is_err());
    }

    #[test]
    fn bad_horizons_rejected() {
        let s = sphere_state(4, 2, 11);
        let plan = ObservationPlan { times: vec![2.0], ..ObservationPlan::default() };
        assert!(simulate(&s, -1.0, &ObservationPlan::default(), SamplerKind::Auto, stream(0, 0, 0)).is_err());
        assert!(simulate(&s, 1.0, &plan, SamplerKind::Auto, stream(0, 0, 0)).is_err());
        let mut p = KacProcess::new(s, SamplerKind::Auto, stream(0, 0, 0));
        p.advance_to(1.0, &mut ()).unwrap();
        assert!(p.advance_to(0.5, &mut ()).is_err());
    }

    #[test]
    fn conserved_drifts_vanish() {
        let s = sphere_state(12, 3, 12);
        let mut rng = stream(12, 0, 0);
        let fs: [fn(&[f64]) -> f64; 3] = [|_| 1.0, norm_sq, |v| v[0]];
        for f in fs {
            let e = generator_drift(&s, f, 0.05, 200, SamplerKind::RowSums, &mut rng).unwrap();
            assert!(e.mean.abs() < 1e-9 && e.se < 1e-9, "{e:?}");
        }
        assert!(generator_drift(&s, fs[0], 0.05, 1, SamplerKind::RowSums, &mut rng).is_err());
    }

    #[test]
    fn event_counts_dominated_by_poisson_bound() {
        let n = 20;
        let t = 0.5;
        let s = sphere_state(n, 3, 13);
        let counts: Vec<f64> = (0..400)
            .map(|r| {
                let mut p = KacProcess::new(s.clone(), SamplerKind::RowSums, stream(13, r, 0));
                p.advance_to(t, &mut ()).unwrap() as f64
            })
            .collect();
        let e = Estimate::from_samples(&counts);
        assert!(e.mean <= 2.0 * n as f64 * t + 3.0 * e.se);
    }

    #[test]
    fn samplers_agree_in_law() {
        let s = sphere_state(16, 3, 14);
        let run = |kind: SamplerKind, tag: u64| {
            let mut counts = Vec::new();
            let mut fourth = Vec::new();
            for r in 0..1500 {
                let mut p = KacProcess::new(s.clone(), kind, stream(14, r, tag));
                counts.push(p.advance_to(0.7, &mut ()).unwrap() as f64);
                fourth.push(p.state().empirical_mean(|v| norm_sq(v) * norm_sq(v)));
            }
            (Estimate::from_samples(&counts), Estimate::from_samples(&fourth))
        };
        let (ca, fa) = run(SamplerKind::RowSums, 1);
        let (cb, fb) = run(SamplerKind::SpeedThinning, 2);
        assert!(ca.z_score(&cb) < 4.0, "{ca:?} {cb:?}");
        assert!(fa.z_score(&fb) < 4.0, "{fa:?} {fb:?}");
    }
}
