use proptest::prelude::*;
use sac_core::field::{Field2D, Grid2D};
use sac_core::geometry::*;
use sac_core::reaction::make_cubic;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn circle_field(n: usize, radius: f64, eps: f64) -> Field2D {
    let grid = Grid2D::unit_square(n).unwrap();
    Field2D::from_fn(grid, |x, y| {
        (((x - 0.5).hypot(y - 0.5) - radius) / (SQRT2 * eps)).tanh()
    })
}

fn line_field(n: usize, eps: f64) -> Field2D {
    let grid = Grid2D::unit_square(n).unwrap();
    Field2D::from_fn(grid, |x, _| ((x - 0.5) / (SQRT2 * eps)).tanh())
}

#[test]
fn linear_field_level_set() {
    let grid = Grid2D::unit_square(33).unwrap();
    let u = Field2D::from_fn(grid, |x, _| x);
    let ls = extract_level_set(&u, 0.5);
    assert_eq!(ls.loops.len(), 1);
    assert!((ls.total_length() - 1.0).abs() < 1e-12);
    assert!(ls.loops[0]
        .points
        .iter()
        .all(|p| (p[0] - 0.5).abs() < 1e-12));

    let sd = signed_distance(&ls, grid, &u).unwrap();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            assert!((sd.at(i, j) - (grid.x(i) - 0.5)).abs() < 1e-12);
        }
    }
}

#[test]
fn saturated_field_has_no_level_set() {
    let grid = Grid2D::unit_square(20).unwrap();
    let u = Field2D::from_fn(grid, |_, _| 1.0);
    let ls = extract_level_set(&u, 0.0);
    assert!(ls.is_empty());
    let z = make_cubic().zeros();
    assert_eq!(
        signed_distance(&ls, grid, &u).unwrap_err(),
        GeometryError::EmptyLevelSet
    );
    assert_eq!(
        layer_width(&u, 0.1, &ls, z, 0.2).unwrap_err(),
        GeometryError::EmptyLevelSet
    );
    assert_eq!(
        hausdorff(&ls, &ls, 0.01).unwrap_err(),
        GeometryError::EmptyLevelSet
    );
}

#[test]
fn circle_radius_and_distance() {
    let u = circle_field(129, 0.3, 0.02);
    let h = u.grid.h;
    let ls = extract_level_set(&u, 0.0);
    let main = ls.main_loop().unwrap();
    assert!(main.closed);
    assert!((main.mean_radius() - 0.3).abs() <= h);

    let sd = signed_distance(&ls, u.grid, &u).unwrap();
    let g = u.grid;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let exact = (g.x(i) - 0.5).hypot(g.y(j) - 0.5) - 0.3;
            assert!((sd.at(i, j) - exact).abs() <= h);
            let v = u.at(i, j);
            if v != 0.0 {
                assert_eq!(sd.at(i, j) < 0.0, v < 0.0);
            }
        }
    }
    // The distance is not differentiable at the centre.
    let res = sd.eikonal_residual(2.0 * h, |x, y| (x - 0.5).hypot(y - 0.5) > 0.1);
    assert!(res <= 0.05, "{res}");
}

#[test]
fn refinement_moves_the_radius_by_at_most_h() {
    let coarse = circle_field(101, 0.3, 0.02);
    let fine = circle_field(201, 0.3, 0.02);
    let r = |u: &Field2D| extract_level_set(u, 0.0).main_loop().unwrap().mean_radius();
    assert!((r(&coarse) - r(&fine)).abs() <= coarse.grid.h);
}

#[test]
fn planar_layer_width_matches_the_tanh_inversion() {
    let z = make_cubic().zeros();
    let width_for = |eps: f64| {
        let u = line_field(401, eps);
        let ls = extract_level_set(&u, 0.0);
        layer_width(&u, 0.1, &ls, z, 0.2).unwrap()
    };
    let exact = 2.0 * SQRT2 * 0.9f64.atanh();
    assert!((exact - 4.164).abs() < 1e-3);
    let w = width_for(0.02);
    assert!(
        (w.max_width - exact * 0.02).abs() <= 0.1 * exact * 0.02,
        "{w:?}"
    );
    assert!(
        (w.area_width - exact * 0.02).abs() <= 0.1 * exact * 0.02,
        "{w:?}"
    );
    let ratio = w.max_width / width_for(0.01).max_width;
    assert!((1.6..=2.4).contains(&ratio), "{ratio}");
}

#[test]
fn eta_outside_the_admissible_range() {
    let z = make_cubic().zeros();
    let u = line_field(65, 0.05);
    let ls = extract_level_set(&u, 0.0);
    assert!(matches!(
        layer_width(&u, 1.0, &ls, z, 0.2),
        Err(GeometryError::InvalidArgument(_))
    ));
}

#[test]
fn hausdorff_examples() {
    let a = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.3, 400)]);
    let b = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.35, 400)]);
    assert_eq!(hausdorff(&a, &a, 0.005).unwrap(), 0.0);
    assert!((hausdorff(&a, &b, 0.005).unwrap() - 0.05).abs() <= 1e-3);
}

#[test]
fn l2_distance_to_the_step() {
    let z = make_cubic().zeros();
    let circle = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], 0.3, 512)]);
    let grid = Grid2D::unit_square(65).unwrap();
    let step = Field2D::from_fn(grid, |x, y| {
        if circle.loops[0].contains([x, y]) {
            -1.0
        } else {
            1.0
        }
    });
    assert_eq!(l2_step_distance(&step, &circle, z).unwrap(), 0.0);

    let open = LevelSet::from_polylines(
        0.0,
        vec![Polyline {
            points: vec![[0.1, 0.1], [0.9, 0.9]],
            closed: false,
        }],
    );
    assert_eq!(
        l2_step_distance(&step, &open, z).unwrap_err(),
        GeometryError::OpenCurve
    );
}

#[test]
fn l2_distance_of_the_profile_scales_with_eps() {
    let z = make_cubic().zeros();
    let radius = 0.3;
    let circle = LevelSet::from_polylines(0.0, vec![Polyline::circle([0.5, 0.5], radius, 1024)]);
    // int (tanh(z / sqrt 2) - sign z)^2 dz = 2 sqrt 2 (2 ln 2 - 1).
    let profile_integral = 2.0 * SQRT2 * (2.0 * 2f64.ln() - 1.0);
    let perimeter = 2.0 * std::f64::consts::PI * radius;
    let mut squares = Vec::new();
    for eps in [0.04, 0.02, 0.01] {
        let n = (8.0 / eps) as usize + 1;
        let d = l2_step_distance(&circle_field(n, radius, eps), &circle, z).unwrap();
        let ratio = d * d / (eps * perimeter);
        assert!(
            (ratio - profile_integral).abs() <= 0.1 * profile_integral,
            "eps={eps}: {ratio}"
        );
        squares.push(d * d);
    }
    for w in squares.windows(2) {
        assert!((1.7..=2.3).contains(&(w[0] / w[1])));
    }
}

fn endpoint_level(u: &Field2D, p: Point) -> Option<f64> {
    let g = &u.grid;
    let sx = (p[0] - g.x0) / g.h;
    let sy = (p[1] - g.y0) / g.h;
    let on = |s: f64| (s - s.round()).abs() < 1e-9;
    if on(sy) {
        let j = sy.round() as usize;
        let i = (sx.floor() as usize).min(g.nx - 2);
        let w = sx - i as f64;
        Some(u.at(i, j) * (1.0 - w) + u.at(i + 1, j) * w)
    } else if on(sx) {
        let i = sx.round() as usize;
        let j = (sy.floor() as usize).min(g.ny - 2);
        let w = sy - j as f64;
        Some(u.at(i, j) * (1.0 - w) + u.at(i, j + 1) * w)
    } else {
        None
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segments_sit_on_cell_edges(values in prop::collection::vec(-1.0f64..1.0, 256), level in -0.5f64..0.5) {
        let grid = Grid2D::unit_square(16).unwrap();
        let u = Field2D { grid, u: values, time: 0.0 };
        let ls = extract_level_set(&u, level);
        for s in &ls.segments {
            for p in s {
                let v = endpoint_level(&u, *p);
                prop_assert!(v.is_some());
                prop_assert!((v.unwrap() - level).abs() <= 1e-12);
            }
        }
        let in_loops: usize = ls.loops.iter().map(Polyline::segment_count).sum();
        prop_assert_eq!(in_loops, ls.segments.len());
    }

    #[test]
    fn distance_sign_follows_the_field(cx in 0.35f64..0.65, cy in 0.35f64..0.65, r in 0.1f64..0.25) {
        let grid = Grid2D::unit_square(48).unwrap();
        let u = Field2D::from_fn(grid, |x, y| (x - cx).hypot(y - cy) - r);
        let ls = extract_level_set(&u, 0.0);
        let sd = signed_distance(&ls, grid, &u).unwrap();
        for (d, v) in sd.values.iter().zip(&u.u) {
            if *v != 0.0 {
                prop_assert_eq!(*d < 0.0, *v < 0.0);
            }
        }
    }
}
