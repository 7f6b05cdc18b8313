use std::sync::Arc;

use meanfield_core::model::*;
use meanfield_core::rates::{sufficient_eta, tabulate_profile, ProfileOptions};
use meanfield_core::rng::{Channel, NoiseStream};

fn inner_ratio(model: &PotentialModel, x: &[f64], y: &[f64]) -> (f64, f64) {
    let d = x.len();
    let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
    model.grad_v(x, &mut gx);
    model.grad_v(y, &mut gy);
    let mut inner = 0.0;
    let mut r2 = 0.0;
    for k in 0..d {
        inner += (gx[k] - gy[k]) * (x[k] - y[k]);
        r2 += (x[k] - y[k]) * (x[k] - y[k]);
    }
    (inner / r2, r2.sqrt())
}

#[test]
fn double_well_kappa_inequality_on_random_pairs() {
    for d in 1..=3 {
        let m = builtin_double_well(d, 1.0, 0.0, InteractionSign::Attractive).unwrap();
        let mut worst = f64::INFINITY;
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        for j in 0..100_000u64 {
            let mut s = NoiseStream::new(2024, Channel::Validation, d as u64, j);
            let scale = [0.1, 0.7, 2.0][(j % 3) as usize];
            s.fill_gaussian(&mut x);
            s.fill_gaussian(&mut y);
            x.iter_mut().for_each(|v| *v *= scale);
            y.iter_mut().for_each(|v| *v *= scale);
            let (ratio, r) = inner_ratio(&m, &x, &y);
            if r > 0.0 {
                worst = worst.min(ratio - m.kappa(r));
            }
        }
        assert!(worst >= -1e-9, "d = {d}: worst slack {worst}");
    }
}

#[test]
fn double_well_examples() {
    let m = builtin_double_well(2, 1.0, 0.0, InteractionSign::Attractive).unwrap();
    let (ratio, _) = inner_ratio(&m, &[1.0, 0.0], &[0.0, 0.0]);
    assert_eq!(ratio, 2.0);
    assert_eq!(m.kappa(1.0), -1.0);
    assert!(builtin_double_well(1, 0.0, 0.0, InteractionSign::Attractive).is_err());
    assert!(builtin_double_well(1, 1.0, -0.1, InteractionSign::Attractive).is_err());
}

#[test]
fn quadratic_examples() {
    let m = builtin_quadratic(2, 1.0, 0.0).unwrap();
    let mut out = [0.0; 2];
    m.grad_v(&[2.0, 0.0], &mut out);
    assert_eq!(out, [2.0, 0.0]);
    let m2 = builtin_quadratic(2, 2.0, 0.3).unwrap();
    let (ratio, _) = inner_ratio(&m2, &[0.3, -1.1], &[2.5, 0.4]);
    assert!((ratio - 2.0).abs() < 1e-14);
    assert_eq!((m2.m_v(), m2.big_m_v(), m2.m_w()), (2.0, 0.0, Some(0.0)));
    assert_eq!(m2.lip_w(), 0.6);
}

#[test]
fn interaction_symmetry_for_builtins() {
    let models = [
        builtin_quadratic(3, 1.0, 0.7).unwrap(),
        builtin_double_well(3, 0.5, 0.2, InteractionSign::Repulsive).unwrap(),
    ];
    for m in &models {
        let mut z = [1.0; 3];
        m.grad_w(&[0.0; 3], &mut z);
        assert_eq!(z, [0.0; 3]);
        for j in 0..1000 {
            let mut s = NoiseStream::new(5, Channel::Validation, 0, j);
            let mut x = [0.0; 3];
            s.fill_gaussian(&mut x);
            let neg = [-x[0], -x[1], -x[2]];
            let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
            m.grad_w(&x, &mut a);
            m.grad_w(&neg, &mut b);
            for k in 0..3 {
                assert!((a[k] + b[k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gronwall_examples() {
    let ou = builtin_quadratic(1, 1.0, 0.0).unwrap();
    let u = gronwall_moment_bound(&ou, 0.0, 0.0).unwrap();
    assert!(u >= 1.0 && (u - 1.0).abs() < 1e-12);
    let ou2 = builtin_quadratic(2, 1.0, 0.0).unwrap();
    assert!((gronwall_moment_bound(&ou2, 0.0, 0.0).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(gronwall_moment_bound(&ou2, 0.0, 100.0).unwrap(), 100.0);
}

struct Radial {
    rho: f64,
}

impl Potentials for Radial {
    fn confinement_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(x).for_each(|(o, xi)| *o = self.rho * xi);
    }
    fn interaction_gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn kappa(&self, _r: f64) -> f64 {
        self.rho
    }
}

fn custom(dim: usize, m_v: f64, big_m_v: f64, m_w: Option<f64>) -> PotentialModel {
    let tail = KappaTail {
        radius: 0.0,
        floor: 2.0 * m_v,
        nondecreasing: true,
    };
    let m = PotentialModel::new("custom", dim, Arc::new(Radial { rho: 2.0 * m_v }), tail, 0.0)
        .unwrap()
        .with_convexity_at_infinity(m_v, big_m_v)
        .unwrap();
    match m_w {
        Some(w) => m.with_interaction_floor(w).unwrap(),
        None => m,
    }
}

#[test]
fn gronwall_is_monotone() {
    let base = gronwall_moment_bound(&custom(1, 1.0, 0.5, Some(0.2)), 0.1, 0.3).unwrap();
    assert!(gronwall_moment_bound(&custom(2, 1.0, 0.5, Some(0.2)), 0.1, 0.3).unwrap() >= base);
    assert!(gronwall_moment_bound(&custom(1, 1.0, 0.9, Some(0.2)), 0.1, 0.3).unwrap() >= base);
    assert!(gronwall_moment_bound(&custom(1, 1.0, 0.5, Some(0.8)), 0.1, 0.3).unwrap() >= base);
    assert!(gronwall_moment_bound(&custom(1, 1.0, 0.5, Some(0.2)), 0.1, 9.0).unwrap() >= base);
    // neither hypothesis: no floor and η ≥ m_V/2
    assert!(matches!(
        gronwall_moment_bound(&custom(1, 1.0, 0.5, None), 0.6, 0.0),
        Err(meanfield_core::Error::Inadmissible(_))
    ));
}

#[test]
fn validation_for_shipped_models() {
    let q = builtin_quadratic(1, 1.0, 0.0).unwrap();
    let pq = tabulate_profile(&q, 0.0, &ProfileOptions::default()).unwrap();
    assert!(validate_assumptions(&q, &pq, 0.1, 2000, 9).unwrap().passed());

    let dw = builtin_double_well(1, 0.5, 0.01, InteractionSign::Attractive).unwrap();
    let p = tabulate_profile(&dw, 0.0, &ProfileOptions::default()).unwrap();
    let eta = sufficient_eta(&dw, &p);
    let report = validate_assumptions(&dw, &p, eta, 20_000, 9).unwrap();
    assert!(report.passed(), "{report:#?}");
    assert!(report.eta_below_half_m_v && report.moment_bound_applicable);

    assert!(validate_assumptions(&dw, &p, eta, 999, 9).is_err());
}
