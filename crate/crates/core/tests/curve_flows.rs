use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sac_core::interface_flow::*;
use sac_core::noise::mn2_from_seed;
use sac_core::reaction::Bistable;
use sac_core::wave::{c0, SpeedCurve};

fn gaussian_increments(seed: u64, n: usize, dt: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect()
}

#[test]
fn constant_curvature_without_noise() {
    let k0 = 0.8;
    let mut c = GaussMapCurve::circle(32, [0.0, 0.0], 1.0 / k0).unwrap();
    let dt = 1e-5;
    for _ in 0..30_000 {
        c = step_kappa_spde(&c, dt, 0.0, 0.0).unwrap();
    }
    let exact = k0 / (1.0 - 2.0 * k0 * k0 * c.time).sqrt();
    assert!(c.kappa.iter().all(|k| (k - exact).abs() < 1e-4));
}

#[test]
fn constant_curvature_matches_the_radius_sde() {
    let (dt, steps, coef) = (1e-5, 20_000, 0.5);
    let dw = gaussian_increments(7, steps, dt);
    let mut c = GaussMapCurve::circle(16, [0.0, 0.0], 1.0).unwrap();
    let path = radius_sde(
        1.0,
        RadiusDrive::Brownian {
            increments: &dw,
            coef,
        },
        dt,
        steps as f64 * dt,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for (n, w) in dw.iter().enumerate() {
        c = step_kappa_spde(&c, dt, coef, *w).unwrap();
        worst = worst.max((1.0 / c.kappa[0] - path.r[n + 1]).abs());
    }
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn perturbed_curve_becomes_rounder() {
    let mut c = GaussMapCurve::from_fn(128, [0.0, 0.0], |th| 1.0 + 0.1 * (2.0 * th).cos()).unwrap();
    let mut prev = c.roundness();
    while c.time < 0.1 {
        c = step_kappa_spde(&c, c.max_dt(), 0.0, 0.0).unwrap();
        let r = c.roundness();
        assert!(r <= prev + 1e-12);
        prev = r;
    }
    assert!(prev < 1.2);
}

#[test]
fn reconstruction_examples() {
    for (kappa, radius) in [(1.0, 1.0), (2.0, 0.5)] {
        let c = GaussMapCurve::circle(512, [0.0, 0.0], 1.0 / kappa).unwrap();
        let rec = reconstruct_curve(&c).unwrap();
        assert!(rec.closure_defect < 1e-12);
        for p in &rec.curve.points {
            assert!((p[0].hypot(p[1]) - radius).abs() <= 1e-6);
        }
    }
    let c = GaussMapCurve::from_fn(512, [1.0, 0.0], |th| 1.0 + 0.1 * (2.0 * th).cos()).unwrap();
    let rec = reconstruct_curve(&c).unwrap();
    assert!(rec.closure_defect <= 1e-6);
    let front = &rec.curve;
    assert!(front.is_simple());
    // Gauge: marker k has normal angle theta_k, so its curvature is kappa_k.
    for k in 0..front.len() {
        assert!((front.curvature(k) - c.kappa[k]).abs() <= 1e-3);
    }
}

#[test]
fn front_translates_when_curvature_is_negligible() {
    let r0 = 1e4;
    let mut c = FrontCurve::circle([0.0, 0.0], r0, 256).unwrap();
    let (dt, v) = (0.01, 1.0);
    for _ in 0..100 {
        c = step_front(&c, dt, v).unwrap();
    }
    let speed = (r0 - c.mean_radius()) / 1.0;
    assert!((speed - v).abs() <= 0.01 * v, "{speed}");
}

#[test]
fn area_law() {
    let mut c = FrontCurve::circle([0.5, 0.5], 0.4, 128).unwrap();
    let a0 = c.area();
    let dt = 1e-5;
    for _ in 0..2000 {
        c = step_front(&c, dt, 0.0).unwrap();
    }
    let rate = (a0 - c.area()) / 0.02;
    assert!((rate - 2.0 * PI).abs() <= 0.01 * 2.0 * PI, "{rate}");
}

#[test]
fn forced_front_follows_the_radius_sde() {
    let eps = 0.05;
    let noise = Arc::new(mn2_from_seed(eps, 0.5, 0.05, 1e-5, 21).unwrap());
    let speed = Arc::new(SpeedCurve::for_bistable(&Bistable::cubic()).unwrap());
    let forcing = FlowForcing::new(eps, noise, speed);
    let dt = 1e-5;
    let path = radius_sde(0.5, RadiusDrive::Forcing(&forcing), dt, 0.05).unwrap();
    let mut c = FrontCurve::circle([0.5, 0.5], 0.5, 128).unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..5000 {
        let t = n as f64 * dt;
        let v = forcing.at(t).unwrap();
        assert_eq!(v.to_bits(), forcing.at(t).unwrap().to_bits());
        c = step_front(&c, dt, v).unwrap();
        worst = worst.max((c.mean_radius() - path.r[n + 1]).abs());
    }
    assert!(worst <= 1e-3, "{worst}");
}

#[test]
fn radius_sde_without_noise() {
    let p = radius_sde(1.0, RadiusDrive::Off, 1e-5, 1.0).unwrap();
    assert!((p.extinct_at.unwrap() - 0.5).abs() <= 1e-3);
    let p = radius_sde(0.4, RadiusDrive::Off, 1e-6, 0.05).unwrap();
    assert!((p.last() - 0.06f64.sqrt()).abs() <= 1e-4);
    assert!((p.at(0.02).unwrap() - (0.16f64 - 0.04).sqrt()).abs() <= 1e-4);
}

#[test]
fn second_moment_of_the_brownian_radius() {
    let coef = c0(&Bistable::cubic()).unwrap();
    let (dt, t_end, paths) = (1e-4, 0.01, 1000);
    let steps = (t_end / dt) as usize;
    let samples: Vec<f64> = (0..paths)
        .map(|k| {
            let dw = gaussian_increments(1000 + k as u64, steps, dt);
            let p = radius_sde(
                1.0,
                RadiusDrive::Brownian {
                    increments: &dw,
                    coef,
                },
                dt,
                t_end,
            )
            .unwrap();
            assert!(p.extinct_at.is_none());
            p.last().powi(2)
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / paths as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    let se = (var / paths as f64).sqrt();
    let exact = 1.0 + (coef * coef - 2.0) * t_end;
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "{mean} vs {exact} (se {se})"
    );
}

#[test]
fn monitor_on_a_shrinking_circle() {
    let (r0, dt) = (0.3, 1e-4);
    let history: Vec<(f64, FrontCurve)> = (0..440)
        .map(|k| {
            let t = k as f64 * dt;
            (
                t,
                FrontCurve::circle([0.5, 0.5], (r0 * r0 - 2.0 * t).sqrt(), 256).unwrap(),
            )
        })
        .collect();
    let m = monitor_stopping(&history, Rect::unit(), 10.0).unwrap();
    let expected = (r0 * r0 - 0.01) / 2.0;
    assert!((m.triggered_at.unwrap() - expected).abs() <= dt + 1e-12);
    assert_eq!(m.clause, Some(StopClause::Curvature));

    let still = vec![(0.0, FrontCurve::circle([0.5, 0.5], 0.3, 128).unwrap()); 5];
    assert_eq!(
        monitor_stopping(&still, Rect::unit(), 6.0)
            .unwrap()
            .triggered_at,
        None
    );
}

#[test]
fn monitor_boundary_clause() {
    let history: Vec<(f64, FrontCurve)> = (0..20)
        .map(|k| {
            let t = k as f64 * 0.01;
            (t, FrontCurve::circle([0.5 + t, 0.5], 0.2, 128).unwrap())
        })
        .collect();
    // Curvature 5 stays below N = 8; the gap 0.3 - t falls below 1/8 after t = 0.175.
    let m = monitor_stopping(&history, Rect::unit(), 8.0).unwrap();
    assert!((m.triggered_at.unwrap() - 0.18).abs() < 1e-9);
    assert_eq!(m.clause, Some(StopClause::Boundary));
}

#[test]
fn empty_history_is_rejected() {
    assert!(matches!(
        monitor_stopping(&[], Rect::unit(), 1.0),
        Err(FlowError::InvalidArgument(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn five_point_curvature_is_exact_on_circles(
        cx in -5.0f64..5.0, cy in -5.0f64..5.0, r in 0.05f64..20.0, th in 0.0f64..std::f64::consts::TAU, dth in 0.01f64..0.3,
    ) {
        let p: [[f64; 2]; 5] = std::array::from_fn(|k| {
            let a = th + (k as f64 - 2.0) * dth;
            [cx + r * a.cos(), cy + r * a.sin()]
        });
        prop_assert!((five_point_curvature(&p) - 1.0 / r).abs() <= 1e-6 / r);
    }

    #[test]
    fn circles_stay_circles_under_the_gauss_map_flow(r in 0.5f64..2.0, steps in 1usize..200) {
        let mut c = GaussMapCurve::circle(32, [0.0, 0.0], r).unwrap();
        for _ in 0..steps {
            c = step_kappa_spde(&c, c.max_dt(), 0.0, 0.0).unwrap();
        }
        prop_assert!((c.roundness() - 1.0).abs() < 1e-12);
    }
}
