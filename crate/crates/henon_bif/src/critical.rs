//! Critical approximations, critical points, critical regions and critical partitions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::binding::compute_dk_from_logs;
use crate::error::{Error, Result};
use crate::leaves::{contracting_field, leaf_curve_intersection, limit_leaf, Intersection};
use crate::linalg::{is_kappa_expanding, is_regular, wi_sequence, DerivativeHistory};
use crate::manifolds::{Curve, RegionR0};
use crate::map_core::{apply, inverse_apply, jacobian, Constants, FamilyParams, Mat2, Perturbation, Point};

/// Most contracting direction of Dfⁿ at fz; the vertical for the degenerate family.
pub fn critical_field(p: &FamilyParams, fz: Point, n: usize) -> Result<Point> {
    if p.is_degenerate() {
        return Ok(Point::new(0.0, 1.0));
    }
    contracting_field(p, fz, n)
}

/// Signed sine of the angle between eₙ(fz) and Df(z)t.
pub fn tangency_function(p: &FamilyParams, z: Point, t: Point, n: usize) -> Result<f64> {
    let e = critical_field(p, apply(p, z), n)?;
    let v = jacobian(p, z).apply(t);
    let nv = v.norm();
    if nv == 0.0 {
        return Ok(0.0);
    }
    Ok(e.cross(v) / nv)
}

/// log ‖wᵢ(ζ)‖ for i = 1..=n, renormalized so long horizons do not overflow.
pub fn log_wi(p: &FamilyParams, zeta: Point, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut z = apply(p, zeta);
    let mut v = Point::new(1.0, 0.0);
    let mut acc = 0.0;
    out.push(0.0);
    for _ in 1..n {
        v = jacobian(p, z).apply(v);
        z = apply(p, z);
        let nv = v.norm();
        if nv == 0.0 {
            out.push(f64::NEG_INFINITY);
            acc = f64::NEG_INFINITY;
            continue;
        }
        acc += nv.ln();
        v = v * (1.0 / nv);
        out.push(acc);
    }
    out
}

/// Arclength-parametrized view of a polyline with interpolated unit tangents.
pub struct Parametrized<'a> {
    pub curve: &'a Curve,
    pub s: Vec<f64>,
}

impl<'a> Parametrized<'a> {
    pub fn new(curve: &'a Curve) -> Self {
        let mut s = Vec::with_capacity(curve.len());
        let mut acc = 0.0;
        for (i, v) in curve.vertices.iter().enumerate() {
            if i > 0 {
                acc += curve.vertices[i - 1].dist(*v);
            }
            s.push(acc);
        }
        Parametrized { curve, s }
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    pub fn eval(&self, sv: f64) -> (Point, Point) {
        let v = &self.curve.vertices;
        if v.len() == 1 {
            return (v[0], self.curve.tangents[0]);
        }
        let k = self.s.partition_point(|x| *x <= sv).clamp(1, v.len() - 1) - 1;
        let d = self.s[k + 1] - self.s[k];
        let u = if d > 0.0 { ((sv - self.s[k]) / d).clamp(0.0, 1.0) } else { 0.0 };
        let t = self.curve.tangents[k] * (1.0 - u) + self.curve.tangents[k + 1] * u;
        (v[k] + (v[k + 1] - v[k]) * u, t.normalized())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodReport {
    pub g1: bool,
    pub g2: bool,
    pub g3: bool,
    pub horizon: usize,
    /// min over i of log‖wᵢ‖ − λ(i−1).
    pub g1_margin: f64,
    /// min over i<j of log‖w_j‖ − log‖wᵢ‖ + 2αi.
    pub g2_margin: f64,
    /// χ(j) for j = M..=horizon (index 0 is j = M).
    pub chi: Vec<usize>,
    /// j where χ(j) = j was taken by default and (1−√α)j ≤ χ(j) would otherwise fail.
    pub chi_flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiceReport {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    /// [θn], the backward depth of (C2) and (C3).
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalApprox {
    pub point: Point,
    pub order: usize,
    pub host: Curve,
    /// Arclength position on the host.
    pub s: f64,
    pub tangent: Point,
    /// |eₙ(fζ) × Df t(ζ)| / ‖Df t(ζ)‖.
    pub residual: f64,
    /// w₁…w_{20n}.
    pub wi: DerivativeHistory,
    pub log_w: Vec<f64>,
    /// min over 1 ≤ i ≤ n of ‖Dfⁱ(fζ)‖.
    pub min_norm: f64,
    pub good: Option<GoodReport>,
    pub nice: Option<NiceReport>,
}

/// min over 1 ≤ i ≤ n of ‖Dfⁱ(z)‖.
pub fn min_product_norm(p: &FamilyParams, z: Point, n: usize) -> f64 {
    let mut acc = Mat2::identity();
    let mut w = z;
    let mut logn = 0.0;
    let mut best = f64::INFINITY;
    for _ in 0..n {
        acc = jacobian(p, w).mul(&acc);
        let s = acc.norm();
        if s == 0.0 {
            return 0.0;
        }
        logn += s.ln();
        acc = acc.scale(1.0 / s);
        best = best.min(logn.exp());
        w = apply(p, w);
    }
    best
}

pub const ORDER_NORM_FLOOR: f64 = 0.1;
pub const ROOT_TOLERANCE: f64 = 1e-14;

fn bisect<F: Fn(f64) -> Result<f64>>(g: F, mut lo: f64, mut hi: f64, mut glo: f64) -> Result<f64> {
    for _ in 0..200 {
        if hi - lo <= ROOT_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn assemble(p: &FamilyParams, host: &Curve, s: f64, z: Point, t: Point, n: usize) -> Result<CriticalApprox> {
    let residual = tangency_function(p, z, t, n)?.abs();
    let min_norm = min_product_norm(p, apply(p, z), n);
    if min_norm < ORDER_NORM_FLOOR {
        return Err(Error::HypothesisViolated(format!("|Df^i(f zeta)| = {min_norm:.3e} < 1/10 within order {n}")));
    }
    Ok(CriticalApprox {
        point: z,
        order: n,
        host: host.clone(),
        s,
        tangent: t,
        residual,
        wi: wi_sequence(p, z, 20 * n),
        log_w: log_wi(p, z, 20 * n),
        min_norm,
        good: None,
        nice: None,
    })
}

/// Root of s ↦ eₙ(fγ(s)) × Df t(γ(s)) on the host curve; among several roots the one nearest x = 0.
pub fn find_critical_approx(p: &FamilyParams, curve: &Curve, n: usize) -> Result<CriticalApprox> {
    let par = Parametrized::new(curve);
    let g = |sv: f64| -> Result<f64> {
        let (z, t) = par.eval(sv);
        tangency_function(p, z, t, n)
    };
    let vals: Vec<f64> = (0..curve.len()).map(|k| tangency_function(p, curve.vertices[k], curve.tangents[k], n)).collect::<Result<_>>()?;
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |sv: f64| {
        let x = par.eval(sv).0.x.abs();
        if best.map_or(true, |(_, bx)| x < bx) {
            best = Some((sv, x));
        }
    };
    for k in 0..vals.len() {
        if vals[k] == 0.0 {
            consider(par.s[k]);
        } else if k + 1 < vals.len() && vals[k + 1] != 0.0 && vals[k].signum() != vals[k + 1].signum() {
            consider(0.5 * (par.s[k] + par.s[k + 1]));
        }
    }
    let (approx, _) = best.ok_or(Error::NoSignChange)?;
    let k = par.s.partition_point(|x| *x <= approx).clamp(1, curve.len()) - 1;
    let s0 = if vals[k] == 0.0 { par.s[k] } else { bisect(g, par.s[k], par.s[(k + 1).min(curve.len() - 1)], vals[k])? };
    let (z, t) = par.eval(s0);
    assemble(p, curve, s0, z, t, n)
}

/// Re-solve an existing approximation on a nearby host γ₂, under the closeness hypotheses with parameter ε.
pub fn refine_critical_approx(p: &FamilyParams, gamma2: &Curve, existing: &CriticalApprox, eps: f64) -> Result<CriticalApprox> {
    let n = existing.order;
    let par = Parametrized::new(gamma2);
    // γ₂(0): the point with the same x-coordinate as ζ
    let xs: Vec<f64> = gamma2.vertices.iter().map(|v| v.x - existing.point.x).collect();
    let k = (0..xs.len().saturating_sub(1))
        .find(|k| xs[*k] == 0.0 || xs[*k].signum() != xs[k + 1].signum())
        .ok_or_else(|| Error::HypothesisViolated("gamma2 does not pass over the approximation".into()))?;
    let u = if xs[k] == xs[k + 1] { 0.0 } else { xs[k] / (xs[k] - xs[k + 1]) };
    let s_match = par.s[k] + u * (par.s[k + 1] - par.s[k]);
    let (z0, t0) = par.eval(s_match);
    let window = eps.powf(n as f64 / 2.0);
    let close = eps.powi(n as i32);
    let gap = z0.dist(existing.point);
    let angle = existing.tangent.cross(t0).abs().asin().min((existing.tangent.cross(-t0)).abs().asin());
    if gap > close {
        return Err(Error::HypothesisViolated(format!("|gamma1(0) - gamma2(0)| = {gap:.3e} > eps^n = {close:.3e}")));
    }
    if angle > close {
        return Err(Error::HypothesisViolated(format!("angle(t1, t2) = {angle:.3e} > eps^n = {close:.3e}")));
    }
    let g = |sv: f64| -> Result<f64> {
        let (z, t) = par.eval(sv);
        tangency_function(p, z, t, n)
    };
    let lo = (s_match - window).max(0.0);
    let hi = (s_match + window).min(par.length());
    let (glo, ghi) = (g(lo)?, g(hi)?);
    let s0 = if glo == 0.0 {
        lo
    } else if ghi == 0.0 {
        hi
    } else if glo.signum() != ghi.signum() {
        bisect(g, lo, hi, glo)?
    } else {
        return Err(Error::HypothesisViolated("no tangency within the eps^(n/2) window".into()));
    };
    let (z, t) = par.eval(s0);
    assemble(p, gamma2, s0, z, t, n)
}

/// χ from free returns (time, bound period) by backward chaining with the (1/λ₀)log(10δ) gap rule.
pub fn build_chi(c: &Constants, horizon: usize, free_returns: &[(usize, usize)]) -> Vec<usize> {
    let gap = (10.0 * c.delta).ln() / c.lambda0;
    let mut sorted: Vec<(usize, usize)> = free_returns.to_vec();
    sorted.sort();
    (c.m..=horizon)
        .map(|j| {
            let mut h = j;
            loop {
                let prev = sorted.iter().rev().find(|(t, _)| *t < h);
                match prev {
                    Some(&(t, pk)) if (h as f64 - t as f64 - pk as f64) <= gap => h = t,
                    _ => break,
                }
            }
            h
        })
        .collect()
}

/// (G1)–(G3) on the cached history, with χ built from the given free returns.
pub fn check_good_behavior(ca: &CriticalApprox, c: &Constants, free_returns: &[(usize, usize)]) -> GoodReport {
    good_behavior_from_logs(&ca.log_w, c, free_returns)
}

pub fn good_behavior_from_logs(log_w: &[f64], c: &Constants, free_returns: &[(usize, usize)]) -> GoodReport {
    let h = log_w.len();
    let mut g1_margin = f64::INFINITY;
    for (k, lw) in log_w.iter().enumerate() {
        g1_margin = g1_margin.min(lw - c.lambda * k as f64);
    }
    // suffix minima give min over j > i in one pass
    let mut suffix = vec![f64::INFINITY; h + 1];
    for k in (0..h).rev() {
        suffix[k] = suffix[k + 1].min(log_w[k]);
    }
    let mut g2_margin = f64::INFINITY;
    for k in 0..h.saturating_sub(1) {
        let i = (k + 1) as f64;
        g2_margin = g2_margin.min(suffix[k + 1] - log_w[k] + 2.0 * c.alpha * i);
    }
    let chi = build_chi(c, h, free_returns);
    let mut g3 = true;
    let mut chi_flagged = Vec::new();
    let mut prefix_max = vec![f64::NEG_INFINITY; h + 1];
    for k in 0..h {
        prefix_max[k + 1] = prefix_max[k].max(log_w[k]);
    }
    for (idx, chj) in chi.iter().enumerate() {
        let j = c.m + idx;
        let lower = (1.0 - c.alpha.sqrt()) * j as f64;
        if (*chj as f64) < lower || *chj > j {
            g3 = false;
            chi_flagged.push(j);
            continue;
        }
        // ‖w_χ‖ ≥ δ‖wᵢ‖ for 1 ≤ i < χ
        if *chj >= 1 && *chj <= h && log_w[chj - 1] < c.delta.ln() + prefix_max[chj - 1] {
            g3 = false;
        }
    }
    GoodReport {
        g1: g1_margin >= -1e-12,
        g2: g2_margin >= -1e-12,
        g3,
        horizon: h,
        g1_margin,
        g2_margin,
        chi,
        chi_flagged,
    }
}

/// (C1)–(C3) niceness of a critical approximation.
pub fn check_nice(p: &FamilyParams, ca: &CriticalApprox, c: &Constants) -> NiceReport {
    let n = ca.order;
    let c1 = min_product_norm(p, apply(p, ca.point), n) >= 1.0;
    let depth = (c.theta * n as f64).floor() as usize;
    let sb = p.sqrt_b();
    let mut back = vec![ca.point];
    let mut c2 = true;
    for _ in 0..depth {
        match inverse_apply(p, *back.last().unwrap()) {
            Ok(z) => {
                if z.x.abs() > 2.0 || z.y.abs() > sb {
                    c2 = false;
                }
                back.push(z);
            }
            Err(_) => {
                c2 = false;
                break;
            }
        }
    }
    let c3 = if depth == 0 {
        true
    } else if !c2 {
        false
    } else {
        let base = *back.last().unwrap();
        let mut m = Mat2::identity();
        let mut w = base;
        for _ in 0..depth {
            m = jacobian(p, w).mul(&m);
            w = apply(p, w);
        }
        match m.inverse() {
            None => false,
            Some(inv) => {
                let u = inv.apply(ca.tangent).normalized();
                is_kappa_expanding(p, base, u, c.kappa_third(), depth).0 && is_regular(p, base, u, 0.01, c.delta, depth)
            }
        }
    };
    NiceReport { c1, c2, c3, depth }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStep {
    pub order: usize,
    pub point: Point,
    /// Distance to the previous order's approximation.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: Point,
    pub host: Curve,
    pub record: Vec<ConvergenceStep>,
    /// Highest-order approximation reached.
    pub approx: CriticalApprox,
    /// Sine of the angle between the limit leaf through fζ and Df t(ζ).
    pub leaf_residual: f64,
    /// Second derivative of the leaf offset of f∘γ at ζ; nonzero means a quadratic tangency.
    pub quadratic_coefficient: f64,
    /// Classification of the limit leaf against the local image f(γ).
    pub leaf_contact: Option<Intersection>,
}

pub const POINT_GAP_FLOOR: f64 = 1e-13;
pub const MAX_POINT_ORDER: usize = 40;

/// The critical point on a free segment: limit of approximations of increasing order.
pub fn find_critical_point(p: &FamilyParams, segment: &Curve) -> Result<CriticalPoint> {
    let mut record: Vec<ConvergenceStep> = Vec::new();
    let mut last: Option<CriticalApprox> = None;
    for n in 1..=MAX_POINT_ORDER {
        let ca = match find_critical_approx(p, segment, n) {
            Ok(ca) => ca,
            Err(Error::NoSignChange) => return Err(Error::NoTangency),
            Err(e) => return Err(e),
        };
        let gap = last.as_ref().map_or(f64::INFINITY, |prev| prev.point.dist(ca.point));
        record.push(ConvergenceStep { order: n, point: ca.point, gap });
        last = Some(ca);
        if gap < POINT_GAP_FLOOR || p.is_degenerate() {
            break;
        }
    }
    let approx = last.unwrap();
    let zeta = approx.point;
    let (leaf_residual, quadratic_coefficient, leaf_contact) = if p.is_degenerate() {
        (0.0, -2.0 * p.a, None)
    } else {
        leaf_tangency(p, segment, &approx)?
    };
    Ok(CriticalPoint { point: zeta, host: segment.clone(), record, approx, leaf_residual, quadratic_coefficient, leaf_contact })
}

fn leaf_tangency(p: &FamilyParams, segment: &Curve, ca: &CriticalApprox) -> Result<(f64, f64, Option<Intersection>)> {
    let fz = apply(p, ca.point);
    let leaf = limit_leaf(p, fz)?;
    let v = jacobian(p, ca.point).apply(ca.tangent);
    let e = Point::new(leaf.dxdy(fz.y), 1.0).normalized();
    let residual = e.cross(v).abs() / v.norm();
    let par = Parametrized::new(segment);
    let h = (1e-4 * par.length()).max(1e-7);
    let offset = |sv: f64| {
        let (z, _) = par.eval(sv);
        let w = apply(p, z);
        w.x - leaf.x_at(w.y)
    };
    let s0 = ca.s;
    let q = (offset(s0 + h) - 2.0 * offset(s0) + offset(s0 - h)) / (h * h);
    // local image of the host, long enough to show both branches of the fold
    let span = (50.0 * h).min(0.5 * par.length());
    let local: Vec<Point> = (0..=200).map(|k| apply(p, par.eval(s0 - span + 2.0 * span * k as f64 / 200.0).0)).collect();
    let contact = leaf_curve_intersection(&leaf, &Curve::new(local)).ok();
    Ok((residual, q, contact))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub horizontal_length: [f64; 2],
    pub hausdorff_gap: f64,
    /// Distance from each boundary's critical point to that boundary's midpoint.
    pub midpoint_offset: [f64; 2],
}

/// A horizontal boundary of a component: f^k of an arc interval of the unstable side of R₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPiece {
    pub k: usize,
    /// Arc heights (on the unstable side of R₀) whose images are the piece's ends, left end first.
    pub arc_range: (f64, f64),
    pub curve: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionComponent {
    pub level: usize,
    pub parent: Option<usize>,
    pub x_range: (f64, f64),
    /// Horizontal boundaries, lower then upper, as x-ascending polylines clipped to x_range.
    pub boundaries: [BoundaryPiece; 2],
    pub critical: [Point; 2],
    pub metrics: ComponentMetrics,
}

impl RegionComponent {
    pub fn contains(&self, p: &FamilyParams, r0: &RegionR0, z: Point, tol: f64) -> bool {
        if z.x < self.x_range.0 || z.x > self.x_range.1 {
            return false;
        }
        let lo = piece_height(p, r0, &self.boundaries[0], z.x);
        let hi = piece_height(p, r0, &self.boundaries[1], z.x);
        z.y >= lo.min(hi) - tol && z.y <= lo.max(hi) + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRegion {
    pub level: usize,
    pub components: Vec<RegionComponent>,
    /// Pieces of ∂R_k that entered a parent without stretching across it.
    pub folded_pieces: usize,
}

impl CriticalRegion {
    pub fn contains(&self, p: &FamilyParams, r0: &RegionR0, z: Point, tol: f64) -> bool {
        self.components.iter().any(|c| c.contains(p, r0, z, tol))
    }
}

pub const GEOMETRIC_TOLERANCE: f64 = 1e-15;
const BOUNDARY_SAMPLES: usize = 257;
const ARC_SEEDS: usize = 4096;

pub fn point_segment_distance(z: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let l2 = d.dot(d);
    if l2 == 0.0 {
        return z.dist(a);
    }
    let u = ((z - a).dot(d) / l2).clamp(0.0, 1.0);
    z.dist(a + d * u)
}

type Dd = TwoFloat;

/// Start point on the unstable side of R₀, interpolated in double-double.
fn arc_start(r0: &RegionR0, y: Dd) -> (Dd, Dd) {
    let ys = &r0.arc_y;
    let i = ys.partition_point(|v| *v < y.hi());
    if i == 0 || i >= ys.len() {
        let x = if i == 0 { r0.arc_x[0] } else { *r0.arc_x.last().unwrap() };
        return (Dd::from(x), y);
    }
    let (y0, y1) = (ys[i - 1], ys[i]);
    let (x0, x1) = (r0.arc_x[i - 1], r0.arc_x[i]);
    if y1 == y0 {
        return (Dd::from(x0.max(x1)), y);
    }
    let t = (y - y0) / (Dd::from(y1) - y0);
    (Dd::from(x0) + (Dd::from(x1) - x0) * t, y)
}

fn apply_dd(p: &FamilyParams, sb: Dd, x: Dd, y: Dd) -> (Dd, Dd) {
    match &p.perturbation {
        Perturbation::Standard => (Dd::from(1.0) - x * x * p.a + sb * y, sb * x * p.sigma()),
        Perturbation::Custom(_) => {
            let z = apply(p, Point::new(x.into(), y.into()));
            (Dd::from(z.x), Dd::from(z.y))
        }
    }
}

fn arc_image_dd(p: &FamilyParams, r0: &RegionR0, y: Dd, k: usize) -> (Dd, Dd) {
    let sb = Dd::from(p.b).sqrt();
    let (mut x, mut y) = arc_start(r0, y);
    for _ in 0..k {
        (x, y) = apply_dd(p, sb, x, y);
    }
    (x, y)
}

/// Image f^k of the unstable side of R₀ at arc height y.
pub fn arc_image(p: &FamilyParams, r0: &RegionR0, y: f64, k: usize) -> Point {
    let (x, y) = arc_image_dd(p, r0, Dd::from(y), k);
    Point::new(x.into(), y.into())
}

/// Arc height at which the piece's image has the given x, by bisection.
fn piece_param_at(p: &FamilyParams, r0: &RegionR0, piece: &BoundaryPiece, x: f64) -> Dd {
    let (mut a, mut b) = (Dd::from(piece.arc_range.0), Dd::from(piece.arc_range.1));
    let xa = arc_image_dd(p, r0, a, piece.k).0;
    let increasing = arc_image_dd(p, r0, b, piece.k).0 >= xa;
    let floor = 1e-32 * a.hi().abs().max(b.hi().abs()).max(1e-300);
    for _ in 0..240 {
        if (b - a).hi().abs() <= floor {
            break;
        }
        let m = (a + b) * 0.5;
        if (arc_image_dd(p, r0, m, piece.k).0 < x) == increasing {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) * 0.5
}

fn piece_height_dd(p: &FamilyParams, r0: &RegionR0, piece: &BoundaryPiece, x: f64) -> Dd {
    arc_image_dd(p, r0, piece_param_at(p, r0, piece, x), piece.k).1
}

/// y of the piece above x, evaluated on the map rather than the polyline.
pub fn piece_height(p: &FamilyParams, r0: &RegionR0, piece: &BoundaryPiece, x: f64) -> f64 {
    piece_height_dd(p, r0, piece, x).into()
}

/// Separation of two x-ascending pieces over a common x-range: the largest vertical gap, scaled by the
/// cosine of the local slope. Agrees with the Hausdorff distance for near-horizontal graphs and stays
/// resolvable when the gap is far below the ulp of the heights.
fn graph_separation(p: &FamilyParams, r0: &RegionR0, lower: &BoundaryPiece, upper: &BoundaryPiece, x_range: (f64, f64)) -> f64 {
    const N: usize = 33;
    let w = x_range.1 - x_range.0;
    let mut best = 0.0f64;
    for i in 0..N {
        let x = x_range.0 + w * i as f64 / (N - 1) as f64;
        let gap: f64 = (piece_height_dd(p, r0, upper, x) - piece_height_dd(p, r0, lower, x)).into();
        let h = 1e-3 * w;
        let slope = (piece_height(p, r0, lower, (x + h).min(x_range.1)) - piece_height(p, r0, lower, (x - h).max(x_range.0))) / (2.0 * h);
        best = best.max(gap.abs() / (1.0 + slope * slope).sqrt());
    }
    best
}

struct Window {
    x: (f64, f64),
    y: (f64, f64),
}

impl Window {
    fn touches(&self, a: Point, b: Point) -> bool {
        let r = a.dist(b);
        a.x.min(b.x) - r <= self.x.1 && a.x.max(b.x) + r >= self.x.0 && a.y.min(b.y) - r <= self.y.1 && a.y.max(b.y) + r >= self.y.0
    }

    fn contains(&self, z: Point) -> bool {
        z.x >= self.x.0 && z.x <= self.x.1 && z.y >= self.y.0 && z.y <= self.y.1
    }
}

/// Adaptive samples (arc height, f^k point) of the arc image, refined wherever it can reach the window.
fn sample_arc_image(p: &FamilyParams, r0: &RegionR0, k: usize, win: &Window, spacing: f64) -> Vec<(f64, Point)> {
    let mut out: Vec<(f64, Point)> = Vec::new();
    let seeds: Vec<(f64, Point)> = (0..=ARC_SEEDS)
        .map(|i| {
            let y = r0.y_lo + (r0.y_hi - r0.y_lo) * i as f64 / ARC_SEEDS as f64;
            (y, arc_image(p, r0, y, k))
        })
        .collect();
    for w in seeds.windows(2) {
        let mut stack = vec![(w[0], w[1], 0usize)];
        while let Some((a, b, depth)) = stack.pop() {
            if !win.touches(a.1, b.1) {
                continue;
            }
            if a.1.dist(b.1) <= spacing || depth >= 60 || b.0 - a.0 <= 1e-17 {
                out.push(a);
                out.push(b);
                continue;
            }
            let ym = 0.5 * (a.0 + b.0);
            let m = (ym, arc_image(p, r0, ym, k));
            stack.push((m, b, depth + 1));
            stack.push((a, m, depth + 1));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    out
}

/// Maximal runs of the arc image inside the window; those crossing it from one vertical side to the
/// other become pieces, the rest are counted as folded.
fn crossing_pieces(p: &FamilyParams, r0: &RegionR0, k: usize, win: &Window) -> (Vec<BoundaryPiece>, usize) {
    let samples = sample_arc_image(p, r0, k, win, (win.x.1 - win.x.0) / 64.0);
    let flags: Vec<bool> = samples.iter().map(|(_, z)| win.contains(*z)).collect();
    let mut pieces = Vec::new();
    let mut folded = 0;
    let mut i = 0;
    while i < samples.len() {
        if !flags[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < samples.len() && flags[j + 1] {
            j += 1;
        }
        let refine = |y_in: f64, y_out: f64| -> f64 {
            let (mut a, mut b) = (y_in, y_out);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if win.contains(arc_image(p, r0, m, k)) {
                    a = m;
                } else {
                    b = m;
                }
            }
            a
        };
        let y0 = if i > 0 { refine(samples[i].0, samples[i - 1].0) } else { samples[i].0 };
        let y1 = if j + 1 < samples.len() { refine(samples[j].0, samples[j + 1].0) } else { samples[j].0 };
        let z0 = arc_image(p, r0, y0, k);
        let z1 = arc_image(p, r0, y1, k);
        let span = win.x.1 - win.x.0;
        if (z0.x - z1.x).abs() > (1.0 - 1e-6) * span {
            let arc_range = if z0.x <= z1.x { (y0, y1) } else { (y1, y0) };
            let verts: Vec<Point> =
                (0..BOUNDARY_SAMPLES).map(|t| arc_image(p, r0, arc_range.0 + (arc_range.1 - arc_range.0) * t as f64 / (BOUNDARY_SAMPLES - 1) as f64, k)).collect();
            pieces.push(BoundaryPiece { k, arc_range, curve: Curve::new(verts) });
        } else {
            folded += 1;
        }
        i = j + 1;
    }
    (pieces, folded)
}

/// Restrict a piece to an x-interval, resampled on the map.
fn clip_piece(p: &FamilyParams, r0: &RegionR0, piece: &BoundaryPiece, x0: f64, x1: f64) -> BoundaryPiece {
    let a = piece_param_at(p, r0, piece, x0);
    let b = piece_param_at(p, r0, piece, x1);
    let verts: Vec<Point> = (0..BOUNDARY_SAMPLES)
        .map(|t| {
            let (x, y) = arc_image_dd(p, r0, a + (b - a) * (t as f64 / (BOUNDARY_SAMPLES - 1) as f64), piece.k);
            Point::new(x.into(), y.into())
        })
        .collect();
    BoundaryPiece { k: piece.k, arc_range: (a.into(), b.into()), curve: Curve::new(verts) }
}

fn component_from(
    p: &FamilyParams,
    r0: &RegionR0,
    level: usize,
    parent: Option<usize>,
    x_range: (f64, f64),
    lower: &BoundaryPiece,
    upper: &BoundaryPiece,
    critical: [Point; 2],
) -> RegionComponent {
    let lower = clip_piece(p, r0, lower, x_range.0, x_range.1);
    let upper = clip_piece(p, r0, upper, x_range.0, x_range.1);
    let metrics = ComponentMetrics {
        horizontal_length: [lower.curve.arclength(), upper.curve.arclength()],
        hausdorff_gap: graph_separation(p, r0, &lower, &upper, x_range),
        midpoint_offset: [lower.curve.midpoint().dist(critical[0]), upper.curve.midpoint().dist(critical[1])],
    };
    RegionComponent { level, parent, x_range, boundaries: [lower, upper], critical, metrics }
}

/// Nested critical regions 𝒞⁽⁰⁾ ⊃ … ⊃ 𝒞⁽ᵏ⁾, components bounded by pieces of ∂R_k = f^k(∂R₀).
pub fn build_critical_regions(p: &FamilyParams, r0: &RegionR0, k_max: usize) -> Result<Vec<CriticalRegion>> {
    let c = Constants::for_params(p);
    let delta = c.delta;
    let mut levels: Vec<CriticalRegion> = Vec::new();
    for k in 0..=k_max {
        if p.b.powf(k as f64 / 2.0) < GEOMETRIC_TOLERANCE {
            return Err(Error::ComponentResolutionLost { level: k });
        }
        let parents: Vec<Option<usize>> = if k == 0 { vec![None] } else { (0..levels[k - 1].components.len()).map(Some).collect() };
        let prev = levels.last();
        let built: Vec<Result<(Vec<RegionComponent>, usize)>> = parents
            .par_iter()
            .map(|pi| {
                let parent = pi.and_then(|i| prev.map(|l| &l.components[i]));
                let (x_range, heights, y_window) = match parent {
                    None => ((-delta, delta), None, (r0.y_lo, r0.y_hi)),
                    Some(q) => {
                        let xm = 0.5 * (q.x_range.0 + q.x_range.1);
                        let h = [piece_height_dd(p, r0, &q.boundaries[0], xm), piece_height_dd(p, r0, &q.boundaries[1], xm)];
                        let ys = q.boundaries.iter().flat_map(|b| b.curve.vertices.iter().map(|v| v.y));
                        let (a, b) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
                        let margin = 1e-9 + q.metrics.hausdorff_gap;
                        (q.x_range, Some(h), (a - margin, b + margin))
                    }
                };
                let win = Window { x: x_range, y: y_window };
                let (pieces, folded) = crossing_pieces(p, r0, k, &win);
                let xm = 0.5 * (x_range.0 + x_range.1);
                let mut tagged: Vec<(Dd, BoundaryPiece)> = pieces.into_iter().map(|pc| (piece_height_dd(p, r0, &pc, xm), pc)).collect();
                if let Some([h0, h1]) = heights {
                    let (lo, hi) = (h0.min(h1), h0.max(h1));
                    let tol = (hi - lo) * 1e-3 + 1e-30 * lo.hi().abs().max(hi.hi().abs());
                    tagged.retain(|(h, _)| *h >= lo - tol && *h <= hi + tol);
                }
                tagged.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
                if tagged.len() % 2 != 0 || tagged.is_empty() {
                    return Err(Error::ComponentResolutionLost { level: k });
                }
                let mut comps = Vec::new();
                for pair in tagged.chunks(2) {
                    let (lower, upper) = (&pair[0].1, &pair[1].1);
                    let cl = find_critical_point(p, &lower.curve)?;
                    let cu = find_critical_point(p, &upper.curve)?;
                    let xr = if k == 0 {
                        x_range
                    } else {
                        let xc = 0.5 * (cl.point.x + cu.point.x);
                        let hw = (x_range.1 - xc).min(xc - x_range.0);
                        (xc - hw, xc + hw)
                    };
                    comps.push(component_from(p, r0, k, *pi, xr, lower, upper, [cl.point, cu.point]));
                }
                Ok((comps, folded))
            })
            .collect();
        let mut components = Vec::new();
        let mut folded_pieces = 0;
        for r in built {
            let (cs, f) = r?;
            components.extend(cs);
            folded_pieces += f;
        }
        levels.push(CriticalRegion { level: k, components, folded_pieces });
    }
    Ok(levels)
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPartitionElement {
    pub curve: Curve,
    pub k: usize,
    pub slice: usize,
    /// +1 right of ζ, −1 left.
    pub side: i8,
    pub bound_period: usize,
}

pub const MAX_SLICES: f64 = 1e6;

/// Annular decomposition of the host of ζ by pullbacks of V_k \ V_{k+1}, sliced into ⌊e^{3αk}⌋ pieces.
pub fn critical_partition(p: &FamilyParams, segment: &Curve, zeta: &CriticalPoint, chi: &[usize], c: &Constants) -> Result<Vec<CriticalPartitionElement>> {
    let ca = &zeta.approx;
    let fz = apply(p, zeta.point);
    let leaf = limit_leaf(p, fz)?;
    let par = Parametrized::new(segment);
    let s0 = ca.s;
    let k_top = ca.log_w.len().saturating_sub(2).max(1);
    let dk: Vec<f64> = (1..=k_top).map(|k| compute_dk_from_logs(&ca.log_w, k, c.alpha)).collect();
    let offset = |sv: f64| {
        let w = apply(p, par.eval(sv).0);
        (w.x - leaf.x_at(w.y)).abs()
    };
    let chi_of = |k: usize| -> usize {
        if k >= c.m && k - c.m < chi.len() {
            chi[k - c.m]
        } else {
            k
        }
    };
    let mut out = Vec::new();
    for side in [1.0f64, -1.0] {
        let end = if side > 0.0 { par.length() } else { 0.0 };
        // boundary of V_k on this side: offset crosses D_k/2, the offset growing away from ζ
        let mut cuts: Vec<(usize, f64)> = Vec::new();
        for (idx, d) in dk.iter().enumerate() {
            let k = idx + 1;
            let target = 0.5 * d;
            if offset(end) < target {
                continue;
            }
            let (mut a, mut b) = (s0, end);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m == a || m == b {
                    break;
                }
                if offset(m) < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            cuts.push((k, 0.5 * (a + b)));
        }
        // γ_k between the V_{k+1} and V_k boundaries
        let mut annuli: Vec<(usize, f64, f64)> = Vec::new();
        for w in cuts.windows(2) {
            let (k, sk) = w[0];
            let (_, sk1) = w[1];
            annuli.push((k, sk1, sk));
        }
        // merge rule: an annulus whose image misses the vertical boundary of V_k joins the next one
        let mut merged: Vec<(usize, f64, f64)> = Vec::new();
        let mut i = 0;
        while i < annuli.len() {
            let (k, a, b) = annuli[i];
            let reaches = offset(b) >= 0.5 * dk[k - 1] * (1.0 - 1e-9);
            if !reaches && i + 1 < annuli.len() {
                let (_, a2, _) = annuli[i + 1];
                merged.push((k, a2.min(a), b.max(a)));
                i += 2;
            } else {
                merged.push((k, a, b));
                i += 1;
            }
        }
        for (k, a, b) in merged {
            let slices = ((3.0 * c.alpha * k as f64).exp().floor()).min(MAX_SLICES) as usize;
            let slices = slices.max(1);
            for sidx in 0..slices {
                let u0 = a + (b - a) * sidx as f64 / slices as f64;
                let u1 = a + (b - a) * (sidx + 1) as f64 / slices as f64;
                let verts: Vec<Point> = (0..=16).map(|t| par.eval(u0 + (u1 - u0) * t as f64 / 16.0).0).collect();
                out.push(CriticalPartitionElement { curve: Curve::new(verts), k, slice: sidx, side: side as i8, bound_period: chi_of(k) });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::Orientation;

    fn line(x0: f64, x1: f64, y: f64, n: usize) -> Curve {
        Curve::new((0..=n).map(|k| Point::new(x0 + (x1 - x0) * k as f64 / n as f64, y)).collect())
    }

    #[test]
    fn degenerate_critical_point_at_origin() {
        let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
        let ca = find_critical_approx(&p, &line(-0.3, 0.2, 0.0, 101), 3).unwrap();
        assert!(ca.point.x.abs() < 1e-14);
    }

    #[test]
    fn horizontal_line_root_near_origin() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        let ca = find_critical_approx(&p, &line(-0.05, 0.05, 0.0, 200), 3).unwrap();
        assert!(ca.point.x.abs() <= 0.01);
        assert!(ca.residual <= 1e-10);
    }

    #[test]
    fn away_from_fold_has_no_root() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        assert!(matches!(find_critical_approx(&p, &line(0.06, 0.3, 0.0, 100), 3), Err(Error::NoSignChange)));
    }

    #[test]
    fn chi_identity_without_returns() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        let c = Constants::for_params(&p);
        let chi = build_chi(&c, 100, &[]);
        assert!(chi.iter().enumerate().all(|(i, v)| *v == i + c.m));
    }
}
