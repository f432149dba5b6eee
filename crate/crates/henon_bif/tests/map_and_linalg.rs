use approx::assert_relative_eq;
use proptest::prelude::*;

use henon_bif::linalg::{kappa_expanding_norms, linear_fit, most_contracting, wi_sequence};
use henon_bif::map_core::{apply, d_da, inverse_apply, iterate, jacobian, Constants, Mat2};
use henon_bif::{Error, FamilyParams, Orientation, Point};

fn fam(a: f64, b: f64, preserving: bool) -> FamilyParams {
    FamilyParams::new(a, b, if preserving { Orientation::Preserving } else { Orientation::Reversing })
}

#[test]
fn explicit_formula() {
    let p = FamilyParams::new(1.4, 0.09, Orientation::Preserving);
    let z = apply(&p, Point::new(0.5, -0.2));
    assert_relative_eq!(z.x, 1.0 - 1.4 * 0.25 + 0.3 * -0.2, epsilon = 1e-15);
    assert_relative_eq!(z.y, -0.3 * 0.5, epsilon = 1e-15);
    let r = FamilyParams::new(1.4, 0.09, Orientation::Reversing);
    assert_relative_eq!(apply(&r, Point::new(0.5, -0.2)).y, 0.15, epsilon = 1e-15);
}

#[test]
fn degenerate_map_is_the_quadratic() {
    let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
    let mut x = 0.3f64;
    let mut z = Point::new(x, 0.0);
    for _ in 0..20 {
        x = 1.0 - 2.0 * x * x;
        z = apply(&p, z);
        assert_eq!(z.x, x);
        assert_eq!(z.y, 0.0);
    }
    assert_eq!(inverse_apply(&p, z), Err(Error::NotInvertible));
}

#[test]
fn jacobian_determinant_is_b() {
    // det Df = −σ b for (1 − ax² + √b y, σ√b x)
    for (pres, sign) in [(true, 1.0), (false, -1.0)] {
        let p = fam(1.9, 1e-3, pres);
        let j = jacobian(&p, Point::new(0.37, 0.01));
        assert_relative_eq!(j.det(), sign * 1e-3, max_relative = 1e-12);
    }
}

#[test]
fn default_constants() {
    let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
    let c = Constants::for_params(&p);
    assert_eq!((c.alpha, c.m, c.delta), (0.01, 30, 0.05));
    assert_relative_eq!(c.lambda, 0.3);
    assert_relative_eq!(c.theta, 1e-6, max_relative = 1e-12);
    // N = [log(1/δ)/θ]
    assert_eq!(c.n_cap, (20f64.ln() / 1e-6).floor() as u64);
    assert_relative_eq!(c.beta, 2.0 * c.c0.ln() / 1e4f64.ln(), max_relative = 1e-12);
    assert_relative_eq!(c.kappa0, c.c0.powf(-10.0), max_relative = 1e-12);
    c.validate().unwrap();
}

#[test]
fn constants_reject_bad_orderings() {
    let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
    assert!(Constants::build(&p, 0.5, 30, 0.05, 0.6).validate().is_err());
    assert!(Constants::build(&p, 0.01, 30, 0.05, 0.7).validate().is_err());
    assert!(Constants::build(&p, 0.01, 0, 0.05, 0.6).validate().is_err());
}

#[test]
fn n0_is_zero_for_wide_intervals_and_grows_as_eps_shrinks() {
    let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
    let c = Constants::for_params(&p);
    assert_eq!(c.n0(1.0), 0.0);
    assert!(c.n0(1e-20) > c.n0(1e-15));
}

#[test]
fn degenerate_wi_are_powers_of_four() {
    let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
    let w = wi_sequence(&p, Point::new(0.0, 0.0), 20);
    for i in 1..=20 {
        assert_eq!(w.norm(i), 4f64.powi(i as i32 - 1));
    }
}

#[test]
fn most_contracting_of_diagonal() {
    let e = most_contracting(&Mat2::diag(3.0, 0.1)).unwrap();
    assert_relative_eq!(e.x.abs(), 0.0, epsilon = 1e-15);
    assert_relative_eq!(e.y.abs(), 1.0, epsilon = 1e-15);
    assert!(matches!(most_contracting(&Mat2::diag(2.0, 2.0)), Err(Error::DegenerateSingularValues { .. })));
}

#[test]
fn kappa_expanding_first_failure() {
    let norms = [1.0, 2.0, 4.0, 0.5, 8.0];
    assert_eq!(kappa_expanding_norms(&norms, 1.0), (false, Some(3)));
    assert_eq!(kappa_expanding_norms(&norms[..3], 1.0).0, true);
}

#[test]
fn linear_fit_exact_line() {
    let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    assert_relative_eq!(slope, -0.5, epsilon = 1e-14);
    assert_relative_eq!(intercept, 3.0, epsilon = 1e-13);
    assert_relative_eq!(r2, 1.0, epsilon = 1e-14);
}

proptest! {
    #[test]
    fn inverse_round_trip(a in 1.0f64..2.2, b in 1e-6f64..1e-2, pres: bool, x in -1.5f64..1.5, y in -0.1f64..0.1) {
        let p = fam(a, b, pres);
        let z = Point::new(x, y);
        let back = inverse_apply(&p, apply(&p, z)).unwrap();
        prop_assert!(back.dist(z) <= 1e-9 * (1.0 + z.norm()) / b.sqrt());
    }

    #[test]
    fn jacobian_matches_central_differences(a in 1.0f64..2.2, b in 0.0f64..1e-2, pres: bool, x in -1.5f64..1.5, y in -0.5f64..0.5) {
        let p = fam(a, b, pres);
        let z = Point::new(x, y);
        let j = jacobian(&p, z);
        let h = 1e-6;
        for (k, e) in [Point::new(1.0, 0.0), Point::new(0.0, 1.0)].into_iter().enumerate() {
            let fd = (apply(&p, z + e * h) - apply(&p, z - e * h)) * (0.5 / h);
            let col = Point::new(j.m[0][k], j.m[1][k]);
            prop_assert!(fd.dist(col) <= 1e-7);
        }
        let fa = (apply(&p.with_a(a + h), z) - apply(&p.with_a(a - h), z)) * (0.5 / h);
        prop_assert!(fa.dist(d_da(&p, z)) <= 1e-7);
    }

    #[test]
    fn most_contracting_attains_smallest_singular_value(m00 in -3.0f64..3.0, m01 in -3.0f64..3.0, m10 in -3.0f64..3.0, m11 in -3.0f64..3.0) {
        let m = Mat2::new(m00, m01, m10, m11);
        // independent oracle: smallest eigenvalue of MᵀM in closed form
        let (p, q, r) = (m00 * m00 + m10 * m10, m00 * m01 + m10 * m11, m01 * m01 + m11 * m11);
        let disc = ((p - r) * (p - r) + 4.0 * q * q).sqrt();
        prop_assume!(disc > 1e-3 * (p + r));
        let smin = (0.5 * (p + r - disc)).max(0.0).sqrt();
        let e = most_contracting(&m).unwrap();
        prop_assert!((e.norm() - 1.0).abs() < 1e-12);
        prop_assert!((m.apply(e).norm() - smin).abs() <= 1e-9 * (1.0 + disc.sqrt()));
    }

    #[test]
    fn iterate_composes(a in 1.0f64..2.0, b in 1e-6f64..1e-3, x in -0.5f64..0.5, n in 0usize..6, k in 0usize..6) {
        let p = fam(a, b, true);
        let z = Point::new(x, 0.0);
        prop_assert_eq!(iterate(&p, iterate(&p, z, n), k), iterate(&p, z, n + k));
    }
}
