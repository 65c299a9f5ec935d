use std::sync::OnceLock;

use proptest::prelude::*;
use sac_core::reaction::Bistable;
use sac_core::wave::*;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn cubic() -> Bistable {
    Bistable::cubic()
}

fn balanced_wave() -> &'static WaveProfile {
    static W: OnceLock<WaveProfile> = OnceLock::new();
    W.get_or_init(|| solve_wave_default(&cubic(), 0.0).unwrap())
}

fn speed_curve() -> &'static SpeedCurve {
    static S: OnceLock<SpeedCurve> = OnceLock::new();
    S.get_or_init(|| SpeedCurve::for_bistable(&cubic()).unwrap())
}

fn trapezoid(dz: f64, v: &[f64]) -> f64 {
    dz * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

#[test]
fn balanced_wave_is_the_tanh_profile() {
    let w = balanced_wave();
    assert!(w.c.abs() <= 1e-8);
    for (z, (m, mz)) in w.z_grid().iter().zip(w.m.iter().zip(&w.mz)) {
        let exact = (z / SQRT2).tanh();
        assert!((m - exact).abs() <= 1e-6, "z={z}");
        assert!((mz - (1.0 - exact * exact) / SQRT2).abs() <= 1e-6, "z={z}");
    }
    assert!(w.m[w.zero_index()].abs() <= 1e-10);
    assert!(w.residual(&cubic()) <= 1e-6);
}

#[test]
fn balanced_wave_decay_rate() {
    let w = balanced_wave();
    assert!(
        (w.lambda_fit - SQRT2).abs() <= 0.05 * SQRT2,
        "{}",
        w.lambda_fit
    );
    assert!((w.rate_plus - SQRT2).abs() < 1e-6 && (w.rate_minus - SQRT2).abs() < 1e-6);
    let zero = w.zero_index();
    for (j, z) in w.z_grid().iter().enumerate().skip(zero) {
        assert!(w.a_plus_delta - w.m[j] <= w.tail_const * (-w.lambda_fit * z).exp() + 1e-12);
    }
}

#[test]
fn equipartition() {
    let w = balanced_wave();
    let sq: Vec<f64> = w.mz.iter().map(|v| v * v).collect();
    let exact = 2.0 * SQRT2 / 3.0;
    assert!((trapezoid(w.dz, &sq) - exact).abs() <= 1e-4);
}

#[test]
fn c0_closed_form() {
    let q = c0(&cubic()).unwrap();
    assert!((q - 3.0 / SQRT2).abs() <= 1e-8 * q);
}

#[test]
fn c0_rejects_unbalanced() {
    let brackets = [(-1.5, -0.5), (-0.4, 0.3), (0.5, 1.5)];
    let g = Bistable::custom(
        "tilted",
        |u| u - u * u * u + 0.1,
        |u| 1.0 - 3.0 * u * u,
        |u| -6.0 * u,
        brackets,
    )
    .unwrap();
    assert!(matches!(c0(&g), Err(WaveError::UnbalancedNonlinearity(_))));
}

#[test]
fn speed_near_balance() {
    let f = cubic();
    let c0v = 3.0 / SQRT2;
    let w = solve_wave_default(&f, 0.01).unwrap();
    assert!((w.c + 0.0212).abs() <= 0.02 * 0.0212, "{}", w.c);
    assert!((w.m[w.zero_index()] - w.a_delta).abs() <= 1e-10);
    assert!(w.mz[1..w.mz.len() - 1].iter().all(|&v| v > 0.0));

    let curve = wave_speed_curve(&f, &[-1e-3, 0.0, 1e-3]).unwrap();
    assert!(curve[1].1.abs() <= 1e-8);
    let slope = (curve[2].1 - curve[0].1) / 2e-3;
    assert!((slope + c0v).abs() <= 0.01 * c0v);
    assert!((curve[0].1 + curve[2].1).abs() <= 1e-4);
}

#[test]
fn out_of_range_delta() {
    let f = cubic();
    let too_far = 1.1 * delta0(&f);
    assert!(matches!(
        wave_speed_curve(&f, &[too_far]),
        Err(WaveError::OutOfCalibratedRange { .. })
    ));
    assert!(matches!(
        speed_curve().c_of(too_far),
        Err(WaveError::OutOfCalibratedRange { .. })
    ));
    assert!(matches!(
        solve_wave_default(&f, 0.5),
        Err(WaveError::NotBistable { .. })
    ));
}

#[test]
fn doubling_the_domain_keeps_the_profile() {
    let f = cubic();
    let w = balanced_wave();
    let half = (w.m.len() - 1) / 2;
    let wide = solve_wave(&f, 0.0, 2.0 * half as f64 * w.dz, 4 * half + 1, 1e-13).unwrap();
    let offset = wide.zero_index() - w.zero_index();
    for (j, m) in w.m.iter().enumerate() {
        assert!((wide.m[j + offset] - m).abs() <= 1e-7);
    }
}

#[test]
fn delta_derivative_is_bounded() {
    let f = cubic();
    let base = balanced_wave();
    let w = solve_wave_default(&f, 1e-3).unwrap();
    let ratio = base
        .z_grid()
        .iter()
        .map(|&z| (w.eval(z).0 - base.eval(z).0).abs() / 1e-3)
        .fold(0.0, f64::max);
    assert!(ratio.is_finite() && ratio < 10.0, "{ratio}");
}

#[test]
fn speed_interpolant() {
    let f = cubic();
    let s = speed_curve();
    assert!(s.c_of(0.0).unwrap().abs() < 1e-8);
    assert!((s.c_of(1e-3).unwrap() + 2.121e-3).abs() <= 0.02 * 2.121e-3);
    assert!((s.forcing(0.01, 2.0).unwrap() - 4.243).abs() <= 0.02 * 4.243);
    let d0 = delta0(&f);
    for k in 0..10 {
        let delta = d0 * (-0.95 + 1.9 * k as f64 / 9.0);
        let direct = speed_only(&f, delta).unwrap();
        assert!(
            (s.c_of(delta).unwrap() - direct).abs() <= 1e-5,
            "delta={delta}"
        );
    }
}

#[test]
fn profile_csv_and_sidecar() {
    let w = balanced_wave();
    let rows = w.rows();
    assert_eq!(rows.len(), w.m.len());
    assert_eq!(rows[0], [w.z_min, w.m[0], w.mz[0]]);
    let side = w.sidecar();
    assert_eq!(side.c, w.c);
    assert_eq!(side.lambda_fit, w.lambda_fit);
    let back: WaveSidecar = serde_json::from_str(&serde_json::to_string(&side).unwrap()).unwrap();
    assert_eq!((back.delta, back.c, back.dz), (side.delta, side.c, side.dz));
    assert!((back.tail_const - side.tail_const).abs() <= 1e-14 * side.tail_const);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn speed_is_odd_and_decreasing(d in 1e-4f64..0.3, dd in 1e-3f64..0.05) {
        let s = speed_curve();
        let d0 = s.delta_max;
        let d = d.min(d0 - dd);
        let (plus, minus) = (s.c_of(d).unwrap(), s.c_of(-d).unwrap());
        prop_assert!((plus + minus).abs() <= 1e-6);
        prop_assert!(s.c_of(d + dd).unwrap() < plus);
    }

    #[test]
    fn wave_family_matches_direct_profiles(z in -6.0f64..6.0, k in 0usize..5) {
        static FAMILY: OnceLock<WaveFamily> = OnceLock::new();
        let f = cubic();
        let fam = FAMILY.get_or_init(|| WaveFamily::build(&f, 0.2, 8).unwrap());
        let delta = -0.2 + 0.1 * k as f64;
        let direct = &fam.profiles[4 * k];
        prop_assert!((direct.delta - delta).abs() < 1e-12);
        let (m, mz, _) = fam.eval(z, delta).unwrap();
        let (dm, dmz) = direct.eval(z);
        prop_assert!((m - dm).abs() < 1e-12 && (mz - dmz).abs() < 1e-12);
    }
}
