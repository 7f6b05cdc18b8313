use itertools::Itertools;
use proptest::prelude::*;

use meanfield_core::metrics::*;
use meanfield_core::model::builtin_quadratic;
use meanfield_core::rates::{tabulate_profile, ProfileOptions, RateProfile};
use meanfield_core::rng::{Channel, NoiseStream};
use meanfield_core::Points;

fn quadratic_profile() -> RateProfile {
    tabulate_profile(&builtin_quadratic(1, 1.0, 0.0).unwrap(), 0.0, &ProfileOptions::default()).unwrap()
}

fn brute_force(a: &Points, b: &Points, cost: impl Fn(f64) -> f64) -> f64 {
    let n = a.len();
    (0..n)
        .permutations(n)
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| {
                    let d: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
                    cost(d.sqrt())
                })
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

fn cloud(seed: u64, n: usize, dim: usize, spread: f64) -> Points {
    let mut s = NoiseStream::new(seed, Channel::Validation, 0, 0);
    let data = (0..n * dim).map(|_| spread * s.gaussian()).collect();
    Points::from_vec(dim, data).unwrap()
}

#[test]
fn exact_solvers_match_permutation_oracle() {
    let p = quadratic_profile();
    let f = |r: f64| p.f(r);
    for inst in 0..100u64 {
        let n = 1 + (inst % 6) as usize;
        let a = cloud(2 * inst, n, 1, 2.0);
        let b = cloud(2 * inst + 1, n, 1, 2.0);
        let oracle = brute_force(&a, &b, f);
        let dp = wasserstein_1d_exact(a.as_slice(), b.as_slice(), f).unwrap();
        let hung = wasserstein_assignment(&a, &b, f).unwrap();
        assert!((dp - oracle).abs() < 1e-12, "instance {inst}");
        assert!((hung - oracle).abs() < 1e-12, "instance {inst}");
        let a3 = cloud(1000 + inst, n, 3, 1.0);
        let b3 = cloud(2000 + inst, n, 3, 1.0);
        assert!((wasserstein_assignment(&a3, &b3, f).unwrap() - brute_force(&a3, &b3, f)).abs() < 1e-12);
    }
}

#[test]
fn five_point_permutation_oracle() {
    let p = quadratic_profile();
    let f = |r: f64| p.f(r);
    let a = cloud(77, 5, 1, 3.0);
    let b = cloud(78, 5, 1, 3.0);
    let v = wasserstein_1d_exact(a.as_slice(), b.as_slice(), f).unwrap();
    assert!((v - brute_force(&a, &b, f)).abs() < 1e-12);
}

#[test]
fn one_d_and_assignment_agree_up_to_128() {
    let p = quadratic_profile();
    let f = |r: f64| p.f(r);
    for (k, n) in [7usize, 32, 64, 100, 128].into_iter().enumerate() {
        let a = cloud(300 + k as u64, n, 1, 3.0);
        let b = cloud(400 + k as u64, n, 1, 3.0);
        let dp = wasserstein_1d_exact(a.as_slice(), b.as_slice(), f).unwrap();
        let hung = wasserstein_assignment(&a, &b, f).unwrap();
        assert!((dp - hung).abs() < 1e-12, "n = {n}: {dp} vs {hung}");
        assert!(dp <= monotone_1d_cost(a.as_slice(), b.as_slice(), f).unwrap() + 1e-12);
    }
}

#[test]
fn coupled_distance_example() {
    use meanfield_core::model::builtin_quadratic;
    use meanfield_core::simulate::*;
    let model = builtin_quadratic(1, 1.0, 0.0).unwrap();
    let p = quadratic_profile();
    let r1 = p.r1();
    let config = SimConfig {
        n: 2,
        m: 2,
        dim: 1,
        h: 0.01,
        t_end: 0.0,
        delta: 0.1,
        seed: 0,
        nu: InitialLaw::PointMass(vec![0.0]),
        mu: InitialLaw::PointMass(vec![0.0]),
        coupling: InitialCoupling::Synchronous,
        mean_field: MeanFieldMode::Closure,
        output_times: vec![0.0],
    };
    let mut ens = CoupledEnsemble::initialize(&config, &model).unwrap();
    assert_eq!(coupled_distance(&ens, &p), 0.0);
    ens.difference = Points::from_scalars(&[1.0, r1 + 2.0]);
    let expected = (47.0 / 48.0 + 5.0 * 2f64.sqrt() / 3.0 + 1.0) / 2.0;
    assert!((coupled_distance(&ens, &p) - expected).abs() < 1e-9);
    assert!((expected - 2.168).abs() < 1e-3);
}

#[test]
fn coupled_bound_dominates_optimal_transport() {
    let p = quadratic_profile();
    let f = |r: f64| p.f(r);
    for n in [2usize, 4, 6, 16, 64] {
        for rep in 0..10u64 {
            let a = cloud(5000 + rep * 100 + n as u64, n, 2, 1.0);
            let b = cloud(9000 + rep * 100 + n as u64, n, 2, 1.0);
            let matched: f64 = a.rows().zip(b.rows()).map(|(x, y)| {
                let d: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
                f(d.sqrt())
            }).sum::<f64>() / n as f64;
            assert!(matched >= wasserstein_assignment(&a, &b, f).unwrap() - 1e-12);
        }
    }
}

fn sample_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality_1d(n in 1usize..12, seed in any::<u64>()) {
        let p = quadratic_profile();
        let f = |r: f64| p.f(r);
        let a = cloud(seed, n, 1, 2.0);
        let b = cloud(seed ^ 1, n, 1, 2.0);
        let c = cloud(seed ^ 2, n, 1, 2.0);
        let ab = wasserstein_1d_exact(a.as_slice(), b.as_slice(), f).unwrap();
        let bc = wasserstein_1d_exact(b.as_slice(), c.as_slice(), f).unwrap();
        let ac = wasserstein_1d_exact(a.as_slice(), c.as_slice(), f).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn triangle_inequality_assignment(n in 1usize..10, seed in any::<u64>()) {
        let p = quadratic_profile();
        let f = |r: f64| p.f(r);
        let a = cloud(seed, n, 2, 1.5);
        let b = cloud(seed ^ 1, n, 2, 1.5);
        let c = cloud(seed ^ 2, n, 2, 1.5);
        let ab = wasserstein_assignment(&a, &b, f).unwrap();
        let bc = wasserstein_assignment(&b, &c, f).unwrap();
        let ac = wasserstein_assignment(&a, &c, f).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn identity_cost_dominates(a in sample_vec(8), b in sample_vec(8)) {
        let p = quadratic_profile();
        let wf = wasserstein_1d_exact(&a, &b, |r| p.f(r)).unwrap();
        let w1 = wasserstein_1d_exact(&a, &b, |r| r).unwrap();
        prop_assert!(wf <= w1 + 1e-12);
        let pa = Points::from_scalars(&a);
        let pb = Points::from_scalars(&b);
        prop_assert!(wasserstein_assignment(&pa, &pb, |r| p.f(r)).unwrap()
            <= wasserstein_assignment(&pa, &pb, |r| r).unwrap() + 1e-12);
    }

    #[test]
    fn exact_1d_is_permutation_invariant_and_symmetric(mut a in sample_vec(7), b in sample_vec(7)) {
        let p = quadratic_profile();
        let f = |r: f64| p.f(r);
        let v = wasserstein_1d_exact(&a, &b, f).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!((v - wasserstein_1d_exact(&b, &a, f).unwrap()).abs() < 1e-12);
        a.reverse();
        prop_assert!((v - wasserstein_1d_exact(&a, &b, f).unwrap()).abs() < 1e-12);
        prop_assert_eq!(wasserstein_1d_exact(&a, &a, f).unwrap(), 0.0);
    }
}

#[test]
fn second_moment_of_ou_stationary_samples() {
    let n = 10_000;
    let x = cloud(31, n, 1, 1.0);
    let m = second_moment(&x);
    assert!((m - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
}
