use std::sync::Arc;

use proptest::prelude::*;
use sac_core::field::*;
use sac_core::geometry::extract_level_set;
use sac_core::noise::{mn2_from_seed, MildNoisePath};
use sac_core::reaction::{make_cubic, Bistable};

fn config(
    grid: Grid2D,
    eps: f64,
    dt: f64,
    t_end: f64,
    initial: InitialCondition,
    noise: MildNoisePath,
) -> SimConfig {
    SimConfig {
        eps,
        f: make_cubic(),
        noise: Arc::new(noise),
        dt,
        t_end,
        snapshot_times: vec![t_end],
        initial,
        grid,
        seed: 0,
    }
}

fn radial_radius(f: &Bistable, eps: f64, r0: f64, t: f64) -> f64 {
    let dr = eps / 4.0;
    let nr = (1.0 / dr).round() as usize + 1;
    let state = FieldRadial::circle(f, nr, 1.0, r0, 0.1).unwrap();
    let dt = admissible_dt(f, dr, eps);
    let mut sim =
        RadialSimulation::new(state, f, eps, dt, Arc::new(MildNoisePath::off(eps, 1.0))).unwrap();
    sim.advance_to(t).unwrap();
    sim.state.level_radius(0.0).unwrap()
}

#[test]
fn two_dimensional_circle_shrinks() {
    let f = make_cubic();
    let eps = 0.02;
    let grid = Grid2D::unit_square(201).unwrap();
    let dt = admissible_dt(&f, grid.h, eps);
    let cfg = config(
        grid,
        eps,
        dt,
        0.02,
        InitialCondition::circle([0.5, 0.5], 0.3, 0.1),
        MildNoisePath::off(eps, 1.0),
    );
    let run = run_simulation(&cfg).unwrap();
    let u = run.snapshots.last().unwrap();
    let r = extract_level_set(u, 0.0).main_loop().unwrap().area_radius();
    assert!((r - 0.05f64.sqrt()).abs() <= 3.0 * eps, "{r}");
}

#[test]
fn radial_circle_shrinks() {
    let f = make_cubic();
    let r = radial_radius(&f, 0.01, 0.4, 0.05);
    assert!((r - 0.06f64.sqrt()).abs() <= 0.03, "{r}");
}

#[test]
fn radial_and_planar_solvers_agree() {
    let f = make_cubic();
    let eps = 0.02;
    let grid = Grid2D::unit_square(201).unwrap();
    let h = grid.h;
    let dt = admissible_dt(&f, h, eps);
    let init = InitialCondition::circle([0.5, 0.5], 0.4, 0.1);
    let mut full = Simulation::new(&config(
        grid,
        eps,
        dt,
        0.05,
        init,
        MildNoisePath::off(eps, 1.0),
    ))
    .unwrap();
    let dr = h;
    let state = FieldRadial::circle(&f, 101, 100.0 * dr, 0.4, 0.1).unwrap();
    let mut radial = RadialSimulation::new(
        state,
        &f,
        eps,
        admissible_dt(&f, dr, eps),
        Arc::new(MildNoisePath::off(eps, 1.0)),
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..=10 {
        let t = 0.005 * k as f64;
        full.advance_to(t).unwrap();
        radial.advance_to(t).unwrap();
        let r2 = extract_level_set(&full.state, 0.0)
            .main_loop()
            .unwrap()
            .area_radius();
        let r1 = radial.state.level_radius(0.0).unwrap();
        worst = worst.max((r2 - r1).abs());
    }
    assert!(worst <= 2.0 * h + 2.0 * eps, "{worst}");
}

#[test]
fn planar_stationary_error_is_second_order() {
    let f = make_cubic();
    let eps = 0.05;
    let error = |n: usize, dt: f64| {
        let h = 1.0 / (n - 1) as f64;
        let grid = Grid2D::new(n, 16, h, 0.0, 0.0).unwrap();
        let exact = |x: f64| ((x - 0.5) / (eps * std::f64::consts::SQRT_2)).tanh();
        let u0 = Field2D::from_fn(grid, |x, _| exact(x));
        let cfg = config(
            grid,
            eps,
            dt,
            0.05,
            InitialCondition::Planar {
                position: 0.5,
                width: 0.1,
            },
            MildNoisePath::off(eps, 1.0),
        );
        let mut sim = Simulation::from_state(u0, &cfg);
        sim.advance_to(0.05).unwrap();
        (0..n)
            .map(|i| (sim.state.at(i, 8) - exact(grid.x(i))).abs())
            .fold(0.0, f64::max)
    };
    let dt = admissible_dt(&f, 1.0 / 80.0, eps);
    let coarse = error(81, dt);
    let fine = error(161, dt / 4.0);
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "{coarse} / {fine} = {ratio}");
}

#[test]
fn uniform_noisy_field_follows_the_scalar_ode() {
    let eps = 0.1;
    let t_end = 0.02;
    let noise = mn2_from_seed(eps, 0.5, t_end, 1e-5, 9).unwrap();
    let grid = Grid2D::unit_square(16).unwrap();
    let dt = 1e-7;
    let cfg = config(
        grid,
        eps,
        dt,
        t_end,
        InitialCondition::Custom {
            values: vec![0.2; 256],
        },
        noise.clone(),
    );
    let run = run_simulation(&cfg).unwrap();
    let u = run.snapshots.last().unwrap();
    assert!(u.u.iter().all(|&v| v == u.u[0]));

    // Classical RK4 on u' = f(u)/eps^2 + xi(t)/eps with a much finer step.
    let g = |t: f64, y: f64| (y - y * y * y) / (eps * eps) + noise.xi(t) / eps;
    let (mut y, mut t) = (0.2, 0.0);
    let k = 2.5e-8;
    for _ in 0..(t_end / k).round() as usize {
        let k1 = g(t, y);
        let k2 = g(t + k / 2.0, y + k / 2.0 * k1);
        let k3 = g(t + k / 2.0, y + k / 2.0 * k2);
        let k4 = g(t + k, y + k * k3);
        y += k / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += k;
    }
    assert!((u.u[0] - y).abs() <= 1e-6, "{} vs {y}", u.u[0]);
}

#[test]
fn reruns_are_identical() {
    let eps = 0.05;
    let grid = Grid2D::unit_square(33).unwrap();
    let f = make_cubic();
    let dt = admissible_dt(&f, grid.h, eps);
    let make = || {
        let noise = mn2_from_seed(eps, 0.5, 0.01, 1e-5, 4).unwrap();
        let mut cfg = config(
            grid,
            eps,
            dt,
            0.01,
            InitialCondition::circle([0.5, 0.5], 0.3, 0.1),
            noise,
        );
        cfg.snapshot_times = vec![0.0, 0.005, 0.01];
        run_simulation(&cfg).unwrap()
    };
    let (a, b) = (make(), make());
    assert_eq!(a.manifest, b.manifest);
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.manifest.snapshot_checksums.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noise_free_solutions_stay_between_the_wells(values in prop::collection::vec(-1.0f64..1.0, 256)) {
        let eps = 0.1;
        let grid = Grid2D::unit_square(16).unwrap();
        let f = make_cubic();
        let dt = admissible_dt(&f, grid.h, eps);
        let cfg = config(grid, eps, dt, 50.0 * dt, InitialCondition::Custom { values }, MildNoisePath::off(eps, 1.0));
        let mut sim = Simulation::new(&cfg).unwrap();
        for _ in 0..50 {
            sim.step().unwrap();
            let (lo, hi) = sim.state.min_max();
            prop_assert!(lo >= -1.0 - 1e-12 && hi <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn ordered_data_stay_ordered(
        values in prop::collection::vec(-1.2f64..1.2, 256),
        lift in prop::collection::vec(0.0f64..0.5, 256),
        seed in 0u64..1000,
    ) {
        let eps = 0.1;
        let grid = Grid2D::unit_square(16).unwrap();
        let f = make_cubic();
        let dt = admissible_dt(&f, grid.h, eps);
        let t_end = 40.0 * dt;
        let noise = mn2_from_seed(eps, 0.5, t_end, dt, seed).unwrap();
        let upper: Vec<f64> = values.iter().zip(&lift).map(|(a, b)| a + b).collect();
        let mut lo = Simulation::new(&config(grid, eps, dt, t_end, InitialCondition::Custom { values }, noise.clone())).unwrap();
        let mut hi = Simulation::new(&config(grid, eps, dt, t_end, InitialCondition::Custom { values: upper }, noise)).unwrap();
        for _ in 0..40 {
            lo.step().unwrap();
            hi.step().unwrap();
            prop_assert!(lo.state.u.iter().zip(&hi.state.u).all(|(a, b)| *a <= b + 1e-10));
        }
    }
}
