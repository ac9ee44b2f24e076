//! The linearised Kac process: a signed branching particle system in a
//! prescribed environment `rho_t`.
//!
//! A particle `(v, s)` branches at rate `2 int |v - x| rho_t(dx)`, picking a
//! partner `x` with density proportional to `|v - x| rho_t(dx)` and a uniform
//! direction; it is replaced by `(v', s)`, `(x', s)` and `(x, -s)`. Since
//! `v' + x' - x = v` and `|v'|^2 + |x'|^2 - |x|^2 = |v|^2`, signed mass,
//! momentum and energy are conserved by every branching.

mod environment;
mod estimators;
mod tree;

pub use environment::{Environment, MASS_TOLERANCE};
pub use estimators::{
    estimate_flow_derivative, estimate_fst, estimate_fst_many, growth_bound_check, lipschitz_profile, FlowDerivative,
    FstEstimate, GrowthCheck, LipschitzProfile, TreeOptions, MAX_DISCARD_FRACTION,
};
pub use tree::{run_tree, BranchEvent, SignedParticleSystem, TreeBuffers, TreeOutcome, DEFAULT_POPULATION_CAP};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetic::norm_sq;
    use crate::measure::WeightedPointCloud;
    use crate::rng::stream;

    fn ring_env() -> Environment {
        let pts = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0, 0.5, 0.5];
        let c = WeightedPointCloud::new(2, pts, vec![0.2; 5]).unwrap();
        Environment::constant(c).unwrap()
    }

    #[test]
    fn dirac_at_rest_never_branches_from_rest() {
        let env = Environment::constant(WeightedPointCloud::dirac(&[0.0, 0.0])).unwrap();
        let mut sys = SignedParticleSystem::single(&[0.0, 0.0], 0.0).unwrap();
        let mut rng = stream(1, 0, 0);
        assert!(sys.branch_step(&env, 10.0, &mut rng).unwrap().is_none());
        assert_eq!(sys.len(), 1);
        assert_eq!(sys.time(), 10.0);
        let g = growth_bound_check(&[0.0, 0.0], 1.0, &env, TreeOptions::new(10), &mut rng).unwrap();
        assert_eq!(g.weighted_mass.mean, 1.0);
        assert!(g.holds && (g.bound - 8f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn branching_conserves_signed_invariants() {
        let env = ring_env();
        let mut sys = SignedParticleSystem::single(&[0.7, -0.2], 0.0).unwrap();
        let mut rng = stream(2, 0, 0);
        let m0 = sys.signed_mass();
        let p0 = sys.signed_momentum();
        let e0 = sys.signed_energy();
        let mut k = 0;
        while let Some(ev) = sys.branch_step(&env, 1.5, &mut rng).unwrap() {
            k += 1;
            assert_eq!(sys.len(), 1 + 2 * k);
            assert!(ev.time <= 1.5);
            let scale = 1.0 + sys.weighted_total_variation();
            assert!((sys.signed_mass() - m0).abs() < 1e-10);
            assert!((sys.signed_energy() - e0).abs() < 1e-10 * scale);
            for (a, b) in sys.signed_momentum().iter().zip(&p0) {
                assert!((a - b).abs() < 1e-10 * scale);
            }
        }
        assert!(k > 0);
    }

    #[test]
    fn tree_population_is_one_plus_twice_events() {
        let env = ring_env();
        let mut buf = TreeBuffers::default();
        let mut rng = stream(3, 0, 0);
        for _ in 0..500 {
            let out = run_tree(&env, &[0.3, 0.4], 1.0, 0.0, 0.8, DEFAULT_POPULATION_CAP, &mut rng, &mut buf);
            assert!(!out.truncated);
            assert_eq!(out.population as u64, 1 + 2 * out.events);
            let mass: f64 = buf.signs.iter().sum();
            assert_eq!(mass, 1.0);
        }
    }

    #[test]
    fn quadratic_weight_is_propagated_exactly() {
        let env = ring_env();
        let mut rng = stream(4, 0, 0);
        let v0 = [0.3, -1.1];
        let f = |v: &[f64]| 1.0 + norm_sq(v);
        let e = estimate_fst(f, &v0, 0.0, 1.0, &env, TreeOptions::new(300), &mut rng).unwrap();
        assert!((e.estimate.mean - f(&v0)).abs() < 1e-10);
        assert!(e.estimate.se < 1e-10);
        assert!(!e.flagged);
        let same = estimate_fst(|v: &[f64]| v[0].tanh(), &v0, 0.6, 0.6, &env, TreeOptions::new(5), &mut rng).unwrap();
        assert_eq!(same.estimate.mean, v0[0].tanh());
    }

    #[test]
    fn estimates_are_linear_under_common_trees() {
        let env = ring_env();
        let v0 = [0.3, -1.1];
        let f = |v: &[f64]| v[0].tanh();
        let g = |v: &[f64]| v[1] * v[1];
        let h = |v: &[f64]| 2.0 * v[0].tanh() - 3.0 * v[1] * v[1];
        let fs: [&(dyn Fn(&[f64]) -> f64 + Sync); 3] = [&f, &g, &h];
        let out = estimate_fst_many(&fs, &v0, 0.0, 0.5, &env, TreeOptions::new(400), &mut stream(5, 0, 0)).unwrap();
        let combo = 2.0 * out[0].estimate.mean - 3.0 * out[1].estimate.mean;
        assert!((out[2].estimate.mean - combo).abs() < 1e-10);
    }

    #[test]
    fn growth_bound_on_ring() {
        let env = ring_env();
        let g = growth_bound_check(&[0.5, 0.5], 0.5, &env, TreeOptions::new(2000), &mut stream(6, 0, 0)).unwrap();
        assert!(g.holds, "{g:?}");
        assert_eq!(g.discarded, 0);
        let zero = growth_bound_check(&[0.5, 0.5], 0.0, &env, TreeOptions::new(10), &mut stream(6, 0, 0)).unwrap();
        assert_eq!(zero.weighted_mass.mean, 1.5);
        assert_eq!(zero.bound, 1.5);
    }

    #[test]
    fn truncated_trees_are_counted() {
        let env = ring_env();
        let opts = TreeOptions { n_trees: 200, population_cap: 3 };
        let e = estimate_fst(|v: &[f64]| v[0], &[2.0, 0.0], 0.0, 2.0, &env, opts, &mut stream(7, 0, 0)).unwrap();
        assert!(e.discarded > 0 && e.flagged);
        assert_eq!(e.estimate.samples + e.discarded, 200);
    }

    #[test]
    fn profile_basics() {
        let one = lipschitz_profile(2, &[0.3, 0.4], &[2.5]).unwrap();
        assert_eq!(one.lipschitz, 0.0);
        assert!((one.sup_norm - 2.0).abs() < 1e-15);
        let p = lipschitz_profile(2, &[0.0, 0.0, 1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((p.lipschitz - 1.0).abs() < 1e-15);
        assert!(lipschitz_profile(2, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn flow_derivative_conserved_quantities() {
        let env = ring_env();
        let plus = WeightedPointCloud::new(2, vec![0.5, 0.0, -0.2, 0.9], vec![1.5, 0.7]).unwrap();
        let minus = WeightedPointCloud::new(2, vec![0.0, 0.3], vec![1.2]).unwrap();
        let at = |t: f64| {
            estimate_flow_derivative(&plus, &minus, &env, t, 400, DEFAULT_POPULATION_CAP, &mut stream(8, 0, 0)).unwrap()
        };
        let x0 = at(0.0);
        let x1 = at(0.7);
        assert_eq!(x1.discarded, 0);
        assert!((x0.cloud.total_mass() - x1.cloud.total_mass()).abs() < 1e-10);
        assert!((x0.cloud.energy() - x1.cloud.energy()).abs() < 1e-9);
        let want = plus.total_mass() - minus.total_mass();
        assert!((x0.cloud.total_mass() - want).abs() < 0.2);
        let same = estimate_flow_derivative(&plus, &plus, &env, 0.5, 50, DEFAULT_POPULATION_CAP, &mut stream(9, 0, 0))
            .unwrap();
        assert!(same.cloud.total_mass().abs() < 1.0);
    }

    #[test]
    fn uncovered_ranges_rejected() {
        let c = WeightedPointCloud::dirac(&[0.0, 0.0]);
        let env = Environment::new(vec![0.0, 1.0], vec![c]).unwrap();
        let mut rng = stream(10, 0, 0);
        let r = estimate_fst(|v: &[f64]| v[0], &[0.0, 0.0], 0.0, 2.0, &env, TreeOptions::new(5), &mut rng);
        assert!(r.is_err());
        let r = estimate_fst(|v: &[f64]| v[0], &[0.0, 0.0, 0.0], 0.0, 0.5, &env, TreeOptions::new(5), &mut rng);
        assert!(r.is_err());
    }
}
