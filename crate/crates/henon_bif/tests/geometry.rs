use proptest::prelude::*;

use henon_bif::critical::{build_critical_regions, find_critical_approx, find_critical_point};
use henon_bif::leaves::{endpoint_contraction, leaf_of_order, leaves_cross, limit_leaf};
use henon_bif::manifolds::{build_r0, classify_curve, find_fixed_points, grow_unstable_manifold, Curve, SaddleLabel};
use henon_bif::map_core::{apply, iterate, jacobian};
use henon_bif::sweep::fold_hosts;
use henon_bif::{FamilyParams, Orientation, Point};

fn std_params() -> FamilyParams {
    FamilyParams::new(2.0, 1e-4, Orientation::Preserving)
}

fn line(x0: f64, x1: f64, y: f64, n: usize) -> Curve {
    Curve::new((0..=n).map(|k| Point::new(x0 + (x1 - x0) * k as f64 / n as f64, y)).collect())
}

#[test]
fn saddles_are_hyperbolic_with_invariant_eigenvectors() {
    let p = std_params();
    let (ps, qs) = find_fixed_points(&p).unwrap();
    assert_eq!((ps.label, qs.label), (SaddleLabel::P, SaddleLabel::Q));
    for s in [ps, qs] {
        assert!(s.lambda_u.abs() > 1.0 && s.lambda_s.abs() < 1.0);
        let j = jacobian(&p, s.location);
        assert!((j.apply(s.e_u) - s.e_u * s.lambda_u).norm() < 1e-12);
        assert!((j.apply(s.e_s) - s.e_s * s.lambda_s).norm() < 1e-12);
    }
    // λ_u λ_s = det Df = b
    assert!((qs.lambda_u * qs.lambda_s - 1e-4).abs() < 1e-15);
}

#[test]
fn unstable_manifold_vertices_are_images_of_their_preimages() {
    let p = std_params();
    let (_, qs) = find_fixed_points(&p).unwrap();
    let um = grow_unstable_manifold(&p, &qs, 2.0).unwrap();
    for br in [&um.plus, &um.minus] {
        let mut checked = 0;
        for (v, pre) in br.vertices.iter().zip(&br.pre) {
            if pre.is_finite() {
                assert!(iterate(&p, *pre, br.map_power).dist(*v) < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 0);
        // the first vertices leave the saddle along e_u
        let d = (br.vertices[0] - qs.location).normalized();
        assert!(d.cross(qs.e_u).abs() < 1e-6);
    }
    // images of the plane: |y| = √b |x_prev|, and R0 orbits have |x| ≤ 1.1
    for v in &um.plus.vertices {
        assert!(v.y.abs() <= 0.011 + 1e-9 || v.x.abs() > 1.2);
    }
}

#[test]
fn trapping_region_shape() {
    let p = std_params();
    let r0 = build_r0(&p).unwrap();
    // the fold tip sits at f(0, y) = (1 + √b y, ·), within b of x = 1
    assert!((r0.tip.x - 1.0).abs() < 10.0 * p.b);
    let grid = r0.grid(50);
    assert!(grid.len() > 50);
    assert!(grid.iter().all(|z| r0.contains(*z)));
    assert!(!r0.contains(Point::new(1.5, 0.0)));
    assert!(!r0.contains(Point::new(0.0, 0.5)));
    let (x0, x1, _, _) = r0.bounds();
    assert!((x0 - r0.saddle_q.location.x).abs() < 1e-3 && (x1 - 1.0).abs() < 1e-3);
}

#[test]
fn order_one_leaf_follows_closed_form_direction() {
    // e₁(z) of Df = [[−2ax, √b], [σ√b, 0]]: dx/dy of the smaller singular direction
    let p = std_params();
    let sb = p.sqrt_b();
    for x in [-0.7, -0.3, 0.25, 0.6] {
        let z = Point::new(x, 0.0);
        let leaf = leaf_of_order(&p, z, 1).unwrap();
        let (m00, m01, m10) = (-2.0 * p.a * x, sb, p.sigma() * sb);
        let (pp, q, r) = (m00 * m00 + m10 * m10, m00 * m01, m01 * m01);
        let lmin = 0.5 * (pp + r - ((pp - r) * (pp - r) + 4.0 * q * q).sqrt());
        // (MᵀM − λ)u = 0 ⇒ u = (q, λ − p) up to scale
        let slope = q / (lmin - pp);
        let i = leaf.ys.iter().position(|y| *y == 0.0).unwrap();
        assert!((leaf.slopes[i] - slope).abs() < 1e-9 * (1.0 + slope.abs()), "x {x}: {} vs {slope}", leaf.slopes[i]);
    }
}

#[test]
fn limit_leaves_are_nearly_vertical_and_contract() {
    let p = std_params();
    let leaf = limit_leaf(&p, Point::new(0.4, 0.0)).unwrap();
    let class = classify_curve(&Curve::new(leaf.ys.iter().zip(&leaf.xs).map(|(y, x)| Point::new(*x, *y)).collect()), p.b);
    assert!(class.vertical);
    let d = endpoint_contraction(&p, &leaf, 2);
    // one step contracts by about b
    assert!(d[1] / d[0] < 1e-2);
    assert!(leaf.certificate.as_ref().unwrap().fitted_ratio < 1.0);
}

#[test]
fn degenerate_critical_point_is_the_origin() {
    let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
    let ca = find_critical_approx(&p, &line(-0.3, 0.2, 0.0, 101), 4).unwrap();
    assert!(ca.point.x.abs() < 1e-14);
}

#[test]
fn critical_approximations_converge_on_the_fold_host() {
    let p = std_params();
    let host = fold_hosts(&p, 0.05, 401).unwrap().remove(0);
    let pts: Vec<Point> = (1..=6).map(|n| find_critical_approx(&p, &host, n).unwrap().point).collect();
    let gaps: Vec<f64> = pts.windows(2).map(|w| w[0].dist(w[1])).collect();
    assert!(gaps.last().unwrap() <= &1e-12, "{gaps:?}");
    assert!(gaps[0] >= gaps[gaps.len() - 1]);
    let cp = find_critical_point(&p, &host).unwrap();
    assert!(cp.quadratic_coefficient.abs() > 1e-3);
    assert!(cp.point.dist(*pts.last().unwrap()) < 1e-10);
    // the critical orbit starts at the fold tip: fζ is near x = 1
    assert!((apply(&p, cp.point).x - 1.0).abs() < 1e-3);
}

#[test]
fn critical_regions_nest() {
    let p = std_params();
    let r0 = build_r0(&p).unwrap();
    let regions = build_critical_regions(&p, &r0, 3).unwrap();
    assert_eq!(regions.len(), 4);
    for w in regions.windows(2) {
        for c in &w[1].components {
            let parent = &w[0].components[c.parent.unwrap()];
            assert!(c.x_range.0 >= parent.x_range.0 - 1e-12 && c.x_range.1 <= parent.x_range.1 + 1e-12);
            for z in c.critical {
                assert!(z.x.abs() < 0.05);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixed_points_solve_the_quadratic(a in 1.0f64..2.2, b in 0.0f64..1e-2, pres: bool) {
        let o = if pres { Orientation::Preserving } else { Orientation::Reversing };
        let p = FamilyParams::new(a, b, o);
        let (ps, qs) = find_fixed_points(&p).unwrap();
        // y = σ√b x, x = 1 − a x² + σ b x
        let s = p.sigma();
        let lin = 1.0 - s * b;
        let d = (lin * lin + 4.0 * a).sqrt();
        prop_assert!((ps.location.x - (d - lin) / (2.0 * a)).abs() < 1e-13);
        prop_assert!((qs.location.x - (-d - lin) / (2.0 * a)).abs() < 1e-13);
        prop_assert!((ps.location.y - s * b.sqrt() * ps.location.x).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn distinct_limit_leaves_do_not_cross(x1 in 0.15f64..0.85, dx in 1e-3f64..0.3) {
        let p = std_params();
        let a = limit_leaf(&p, Point::new(x1, 0.0)).unwrap();
        let b = limit_leaf(&p, Point::new((x1 + dx).min(0.95), 0.0)).unwrap();
        prop_assert!(!leaves_cross(&a, &b));
    }
}
