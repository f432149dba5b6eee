//! 2×2 cocycles: most contracting directions, expansion and regularity tests,
//! hyperbolic times and the derivative history along critical orbits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_core::{apply, jacobian, Constants, FamilyParams, Mat2, Point};

pub const DEGENERACY_GAP: f64 = 1e-10;

/// Unit vector minimizing ‖Mu‖, normalized so that its second component is ≥ 0.
pub fn most_contracting(m: &Mat2) -> Result<Point> {
    let scale = m.m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::DegenerateSingularValues { gap: 0.0 });
    }
    let n = m.scale(1.0 / scale);
    let (s1, s2) = n.singular_values();
    let gap = (s1 - s2) / s1;
    if !(gap >= DEGENERACY_GAP) {
        return Err(Error::DegenerateSingularValues { gap });
    }
    let t = n.transpose().mul(&n);
    let (p, q, r) = (t.m[0][0], t.m[0][1], t.m[1][1]);
    let theta = 0.5 * (2.0 * q).atan2(p - r);
    let (s, c) = theta.sin_cos();
    let e = Point::new(-s, c);
    Ok(if e.y < 0.0 || (e.y == 0.0 && e.x < 0.0) { -e } else { e })
}

/// Products M⁽ⁱ⁾ = Mᵢ···M₁ along a base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleHistory {
    pub base: Point,
    pub products: Vec<Mat2>,
    pub norms: Vec<f64>,
    pub dets: Vec<f64>,
}

impl CocycleHistory {
    pub fn from_matrices(base: Point, mats: &[Mat2]) -> Self {
        let mut products = Vec::with_capacity(mats.len());
        let mut acc = Mat2::identity();
        for mi in mats {
            acc = mi.mul(&acc);
            products.push(acc);
        }
        let norms = products.iter().map(|p| p.norm()).collect();
        let dets = products.iter().map(|p| p.det()).collect();
        CocycleHistory { base, products, norms, dets }
    }

    /// Jacobian cocycle of the map along the orbit of z, n steps.
    pub fn along_orbit(p: &FamilyParams, z: Point, n: usize) -> Self {
        let mut mats = Vec::with_capacity(n);
        let mut w = z;
        for _ in 0..n {
            mats.push(jacobian(p, w));
            w = apply(p, w);
        }
        CocycleHistory::from_matrices(z, &mats)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractingReport {
    pub directions: Vec<Point>,
    /// ‖eᵢ × eᵢ₋₁‖ for i ≥ 2 (index 0 holds i = 2).
    pub cross: Vec<f64>,
    /// Fitted per-step ratio of the cross products, over the entries above the roundoff floor.
    pub fitted_ratio: f64,
    /// The constant C in (Cb/κ²) implied by the fitted ratio.
    pub fitted_c: f64,
    /// ‖eᵢ×eᵢ₋₁‖ / (C b/κ²)^{i−1} with the fitted C.
    pub normalized: Vec<f64>,
    /// ‖M⁽ⁱ⁾eₙ‖ for i = 1..n.
    pub pushed_norms: Vec<f64>,
}

pub const ROUNDOFF_FLOOR: f64 = 1e-15;

/// Least-squares slope and intercept of y against x, with R².
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fitted geometric ratio of a positive sequence: exp of the log-linear slope.
/// Entries below `floor` are dropped; a sequence that reaches the floor after one
/// step is given the ratio implied by that step.
pub fn geometric_ratio(values: &[f64], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > floor)
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&xs, &ys).0.exp()
    } else if pts.len() == 1 {
        // one resolved value followed by roundoff: bound the ratio by floor / value
        (floor / values[pts[0].0 as usize]).min(1.0)
    } else {
        0.0
    }
}

pub fn contracting_sequence(history: &CocycleHistory, kappa: f64, b: f64) -> Result<ContractingReport> {
    for (i, n) in history.norms.iter().enumerate() {
        if *n < kappa.powi(i as i32 + 1) {
            return Err(Error::ExpansionHypothesisViolated { index: i + 1 });
        }
    }
    let dirs = history.products.iter().map(most_contracting).collect::<Result<Vec<_>>>()?;
    let cross: Vec<f64> = dirs.windows(2).map(|w| w[1].cross(w[0]).abs()).collect();
    let ratio = geometric_ratio(&cross, ROUNDOFF_FLOOR);
    let fitted_c = if b > 0.0 { ratio * kappa * kappa / b } else { 0.0 };
    let normalized = cross
        .iter()
        .enumerate()
        .map(|(k, c)| if ratio > 0.0 { c / ratio.powi(k as i32 + 1) } else { 0.0 })
        .collect();
    let pushed_norms = match dirs.last() {
        Some(en) => history.products.iter().map(|m| m.apply(*en).norm()).collect(),
        None => Vec::new(),
    };
    Ok(ContractingReport { directions: dirs, cross, fitted_ratio: ratio, fitted_c, normalized, pushed_norms })
}

/// Norms ‖Dfⁱv‖ for i = 0..=n along the orbit of z.
pub fn pushed_norms(p: &FamilyParams, z: Point, v: Point, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut w = z;
    let mut u = v;
    out.push(u.norm());
    for _ in 0..n {
        u = jacobian(p, w).apply(u);
        w = apply(p, w);
        out.push(u.norm());
    }
    out
}

/// Returns (true, None) when ‖Dfⁱv‖ ≥ κⁱ‖v‖ for 1 ≤ i ≤ n, otherwise (false, first failing i).
pub fn is_kappa_expanding(p: &FamilyParams, z: Point, v: Point, kappa: f64, n: usize) -> (bool, Option<usize>) {
    kappa_expanding_norms(&pushed_norms(p, z, v, n), kappa)
}

pub fn kappa_expanding_norms(norms: &[f64], kappa: f64) -> (bool, Option<usize>) {
    let v0 = norms[0];
    for (i, ni) in norms.iter().enumerate().skip(1) {
        if *ni < kappa.powi(i as i32) * v0 {
            return (false, Some(i));
        }
    }
    (true, None)
}

/// ‖Dfᵐv‖ ≥ rδ‖Dfⁱv‖ for all 0 ≤ i < m.
pub fn is_regular(p: &FamilyParams, z: Point, v: Point, r: f64, delta: f64, m: usize) -> bool {
    is_regular_norms(&pushed_norms(p, z, v, m), r, delta, m)
}

pub fn is_regular_norms(norms: &[f64], r: f64, delta: f64, m: usize) -> bool {
    let top = norms[m];
    norms[..m].iter().all(|ni| top >= r * delta * ni)
}

/// Greedy ladder of well-distributed hyperbolic times for a norm sequence ‖Dfⁱv‖, i = 0..=m.
pub fn hyperbolic_times_norms(norms: &[f64], m: usize, c: &Constants) -> Result<Vec<usize>> {
    let l = (1.0 / c.delta).ln();
    if (m as f64) < l || norms.len() < m + 1 {
        return Err(Error::NoHyperbolicTimes);
    }
    if !is_regular_norms(norms, 0.01, c.delta, m) {
        return Err(Error::NoHyperbolicTimes);
    }
    let kappa = c.kappa_quarter();
    let expanding_from = |mu: usize| -> bool {
        let base = norms[mu];
        (1..=m - mu).all(|i| norms[mu + i] >= kappa.powi(i as i32) * base)
    };
    let mf = m as f64;
    // last time: m − l ≤ μ_s ≤ m − l/2, largest valid first
    let lo = (mf - l).ceil().max(0.0) as usize;
    let hi = (mf - l / 2.0).floor() as usize;
    let mut ladder = Vec::new();
    let mut current = None;
    for mu in (lo..=hi.min(m)).rev() {
        if expanding_from(mu) {
            current = Some(mu);
            break;
        }
    }
    let mut mu = current.ok_or(Error::NoHyperbolicTimes)?;
    ladder.push(mu);
    while (mu as f64) >= mf / 2.0 {
        let d = m - mu;
        let dmin = 4 * d;
        let dmax = 16 * d;
        let mut next = None;
        for dd in dmin..=dmax.min(m) {
            let cand = m - dd;
            if expanding_from(cand) {
                next = Some(cand);
                break;
            }
        }
        mu = next.ok_or(Error::NoHyperbolicTimes)?;
        ladder.push(mu);
    }
    ladder.reverse();
    if ladder.len() < 2 {
        return Err(Error::NoHyperbolicTimes);
    }
    Ok(ladder)
}

pub fn hyperbolic_times(p: &FamilyParams, z: Point, v: Point, m: usize, c: &Constants) -> Result<Vec<usize>> {
    hyperbolic_times_norms(&pushed_norms(p, z, v, m), m, c)
}

/// Re-check of the three ladder clauses; returns which clause fails, if any.
pub fn check_hyperbolic_ladder(norms: &[f64], m: usize, ladder: &[usize], c: &Constants) -> std::result::Result<(), char> {
    let kappa = c.kappa_quarter();
    for &mu in ladder {
        let base = norms[mu];
        if !(1..=m - mu).all(|i| norms[mu + i] >= kappa.powi(i as i32) * base) {
            return Err('a');
        }
    }
    for w in ladder.windows(2) {
        let r = (m - w[1]) as f64 / (m - w[0]) as f64;
        if !(1.0 / 16.0..=0.25).contains(&r) {
            return Err('b');
        }
    }
    let l = (1.0 / c.delta).ln();
    let first = ladder[0] as f64;
    let last = *ladder.last().unwrap() as f64;
    let mf = m as f64;
    if ladder.len() < 2 || first >= mf / 2.0 || last < mf - l || last > mf - l / 2.0 {
        return Err('c');
    }
    Ok(())
}

/// wᵢ(ζ) = Df^{i−1}(fζ)(1,0)ᵀ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeHistory {
    pub base: Point,
    /// w[0] is w₁.
    pub w: Vec<Point>,
}

impl DerivativeHistory {
    /// ‖wᵢ‖ with 1-based index.
    pub fn norm(&self, i: usize) -> f64 {
        self.w[i - 1].norm()
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.w.iter().map(|v| v.norm()).collect()
    }

    pub fn from_norms(base: Point, norms: &[f64]) -> Self {
        DerivativeHistory { base, w: norms.iter().map(|n| Point::new(*n, 0.0)).collect() }
    }
}

pub fn wi_sequence(p: &FamilyParams, zeta: Point, n: usize) -> DerivativeHistory {
    let mut w = Vec::with_capacity(n);
    let mut z = apply(p, zeta);
    let mut v = Point::new(1.0, 0.0);
    w.push(v);
    for _ in 1..n {
        v = jacobian(p, z).apply(v);
        z = apply(p, z);
        w.push(v);
    }
    DerivativeHistory { base: zeta, w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::Orientation;

    #[test]
    fn diagonal_contracting() {
        let e = most_contracting(&Mat2::diag(2.0, 0.1)).unwrap();
        assert!(e.x.abs() < 1e-15 && (e.y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_degenerate() {
        let r = Mat2::rotation(std::f64::consts::FRAC_PI_2);
        assert!(matches!(most_contracting(&r), Err(Error::DegenerateSingularValues { .. })));
    }

    #[test]
    fn shear_eigenvector() {
        let m = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let e = most_contracting(&m).unwrap();
        let mtm = m.transpose().mul(&m);
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        let r = mtm.apply(e) - e * lam;
        assert!(r.norm() < 1e-14);
        assert!(e.y >= 0.0);
    }

    #[test]
    fn constant_diagonal_cocycle() {
        let b = 1e-4;
        let mats = vec![Mat2::diag(2.0, b); 10];
        let h = CocycleHistory::from_matrices(Point::default(), &mats);
        let rep = contracting_sequence(&h, 1.5, b).unwrap();
        assert!(rep.directions.iter().all(|e| e.x.abs() < 1e-15 && (e.y - 1.0).abs() < 1e-15));
        assert!(rep.cross.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn expansion_violation() {
        let mats = vec![Mat2::diag(1.1, 0.1); 5];
        let h = CocycleHistory::from_matrices(Point::default(), &mats);
        assert!(matches!(
            contracting_sequence(&h, 1.5, 1e-4),
            Err(Error::ExpansionHypothesisViolated { index: 1 })
        ));
    }

    #[test]
    fn kappa_expanding_vacuous() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        assert_eq!(is_kappa_expanding(&p, Point::new(0.3, 0.0), Point::new(0.0, 1.0), 2.0, 0), (true, None));
    }

    #[test]
    fn regularity_examples() {
        let grow: Vec<f64> = (0..=10).map(|i| 2f64.powi(i)).collect();
        assert!(is_regular_norms(&grow, 1.0 / 0.05, 0.05, 10));
        let mut peak = grow.clone();
        peak[5] = 1e6;
        assert!(!is_regular_norms(&peak, 0.1, 0.05, 10));
    }

    #[test]
    fn doubling_ladder() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        let c = Constants::for_params(&p);
        let norms: Vec<f64> = (0..=40).map(|i| 2f64.powi(i)).collect();
        let ladder = hyperbolic_times_norms(&norms, 40, &c).unwrap();
        assert!(ladder.len() >= 2);
        assert_eq!(check_hyperbolic_ladder(&norms, 40, &ladder, &c), Ok(()));
    }

    #[test]
    fn degenerate_wi_powers_of_four() {
        let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
        let h = wi_sequence(&p, Point::new(0.0, 0.0), 20);
        assert_eq!(h.w[0], Point::new(1.0, 0.0));
        for i in 1..=20 {
            assert_eq!(h.norm(i), 4f64.powi(i as i32 - 1));
        }
    }
}
