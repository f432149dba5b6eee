//! Long stable leaves: integral curves of the most contracting direction field eᵢ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{geometric_ratio, most_contracting};
use crate::manifolds::{Curve, VERTICAL_CONSTANT};
use crate::map_core::{apply, jacobian, Constants, FamilyParams, Mat2, Point};

/// Most contracting direction of Dfⁱ(z), normalized so that its y-component is ≥ 0.
pub fn contracting_field(p: &FamilyParams, z: Point, i: usize) -> Result<Point> {
    if p.is_degenerate() {
        return Err(Error::FieldDegenerate { x: z.x, y: z.y });
    }
    let mut acc = Mat2::identity();
    let mut w = z;
    for _ in 0..i {
        acc = jacobian(p, w).mul(&acc);
        let s = acc.m.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if s > 0.0 && s.is_finite() {
            acc = acc.scale(1.0 / s);
        }
        w = apply(p, w);
    }
    most_contracting(&acc).map_err(|_| Error::FieldDegenerate { x: z.x, y: z.y })
}

/// min over j ≤ i of ‖Dfʲ(z)‖^{1/j}: the expansion rate the leaf construction relies on.
pub fn expansion_rate(p: &FamilyParams, z: Point, i: usize) -> f64 {
    let mut acc = Mat2::identity();
    let mut w = z;
    let mut logn = 0.0;
    let mut rate = f64::INFINITY;
    for j in 1..=i {
        acc = jacobian(p, w).mul(&acc);
        let n = acc.norm();
        logn += n.ln();
        acc = acc.scale(1.0 / n);
        rate = rate.min((logn / j as f64).exp());
        w = apply(p, w);
    }
    rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafOrder {
    Finite(usize),
    Limit(usize),
}

impl LeafOrder {
    pub fn value(self) -> usize {
        match self {
            LeafOrder::Finite(n) | LeafOrder::Limit(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    /// d_{C²}(Γᵢ, Γᵢ₋₁) for i = 2..=order.
    pub successive: Vec<f64>,
    pub fitted_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub ys: Vec<f64>,
    pub xs: Vec<f64>,
    /// dx/dy at each sample, straight from the field.
    pub slopes: Vec<f64>,
    pub order: LeafOrder,
    pub base: Point,
    /// Measured expansion rate at the base point.
    pub kappa: f64,
    /// Rate sits between δ¹⁵ and κ₀^{1/2}: valid by hypothesis but not comfortably.
    pub marginal: bool,
    pub certificate: Option<ContractionCertificate>,
}

impl Leaf {
    pub fn y_range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    fn segment(&self, y: f64) -> usize {
        let i = self.ys.partition_point(|v| *v <= y);
        i.clamp(1, self.ys.len() - 1) - 1
    }

    /// Cubic Hermite interpolation of the graph (extrapolates linearly outside the range).
    pub fn x_at(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0] + self.slopes[0] * (y - self.ys[0]);
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1] + self.slopes[n - 1] * (y - self.ys[n - 1]);
        }
        let i = self.segment(y);
        let h = self.ys[i + 1] - self.ys[i];
        let u = (y - self.ys[i]) / h;
        let (u2, u3) = (u * u, u * u * u);
        self.xs[i] * (2.0 * u3 - 3.0 * u2 + 1.0)
            + self.slopes[i] * h * (u3 - 2.0 * u2 + u)
            + self.xs[i + 1] * (-2.0 * u3 + 3.0 * u2)
            + self.slopes[i + 1] * h * (u3 - u2)
    }

    pub fn dxdy(&self, y: f64) -> f64 {
        let i = self.segment(y.clamp(self.ys[0], *self.ys.last().unwrap()));
        let h = self.ys[i + 1] - self.ys[i];
        let u = ((y - self.ys[i]) / h).clamp(0.0, 1.0);
        let u2 = u * u;
        (self.xs[i] * (6.0 * u2 - 6.0 * u) + self.xs[i + 1] * (-6.0 * u2 + 6.0 * u)) / h
            + self.slopes[i] * (3.0 * u2 - 4.0 * u + 1.0)
            + self.slopes[i + 1] * (3.0 * u2 - 2.0 * u)
    }

    pub fn curve(&self) -> Curve {
        Curve::new(self.ys.iter().zip(&self.xs).map(|(y, x)| Point::new(*x, *y)).collect())
    }

    pub fn lower_end(&self) -> Point {
        Point::new(self.xs[0], self.ys[0])
    }

    pub fn upper_end(&self) -> Point {
        Point::new(*self.xs.last().unwrap(), *self.ys.last().unwrap())
    }

    /// max(|x′|, |x″|)/√b over the leaf.
    pub fn vertical_constant(&self, b: f64) -> f64 {
        let sb = b.sqrt();
        let mut worst: f64 = self.slopes.iter().fold(0.0, |m, s| m.max(s.abs()));
        for i in 1..self.ys.len() - 1 {
            let d2 = (self.slopes[i + 1] - self.slopes[i - 1]) / (self.ys[i + 1] - self.ys[i - 1]);
            worst = worst.max(d2.abs());
        }
        if sb > 0.0 {
            worst / sb
        } else {
            f64::INFINITY
        }
    }

    pub fn is_vertical(&self, b: f64) -> bool {
        self.vertical_constant(b) <= VERTICAL_CONSTANT
    }
}

/// y-steps per √b: the spec'd arclength step √b/64, with y as the (near-arclength) parameter.
const STEPS_PER_SQRT_B: f64 = 64.0;

fn slope_field(p: &FamilyParams, z: Point, i: usize) -> Result<f64> {
    let e = contracting_field(p, z, i)?;
    if e.y.abs() < 1e-3 {
        return Err(Error::FieldDegenerate { x: z.x, y: z.y });
    }
    Ok(e.x / e.y)
}

fn integrate(p: &FamilyParams, z: Point, i: usize, y_end: f64, h_nominal: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let span = y_end - z.y;
    let n = ((span.abs() / h_nominal).ceil() as usize).max(1);
    let h = span / n as f64;
    let mut ys = vec![z.y];
    let mut xs = vec![z.x];
    let mut ss = vec![slope_field(p, z, i)?];
    let (mut x, mut y) = (z.x, z.y);
    for _ in 0..n {
        let k1 = *ss.last().unwrap();
        let k2 = slope_field(p, Point::new(x + 0.5 * h * k1, y + 0.5 * h), i)?;
        let k3 = slope_field(p, Point::new(x + 0.5 * h * k2, y + 0.5 * h), i)?;
        let k4 = slope_field(p, Point::new(x + h * k3, y + h), i)?;
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        y += h;
        ys.push(y);
        xs.push(x);
        ss.push(slope_field(p, Point::new(x, y), i)?);
    }
    Ok((ys, xs, ss))
}

/// Integral curve of eᵢ through z over |y| ≤ √b (extended to include z).
pub fn leaf_of_order(p: &FamilyParams, z: Point, i: usize) -> Result<Leaf> {
    if p.is_degenerate() {
        return Err(Error::FieldDegenerate { x: z.x, y: z.y });
    }
    let c = Constants::for_params(p);
    let kappa = expansion_rate(p, z, i.max(1));
    if kappa < c.delta.powi(15) {
        return Err(Error::ExpansionHypothesisViolated { index: i });
    }
    let sb = p.sqrt_b();
    let h = sb / STEPS_PER_SQRT_B;
    let top = sb.max(z.y);
    let bottom = (-sb).min(z.y);
    let (uy, ux, us) = integrate(p, z, i, top, h)?;
    let (dy, dx, ds) = integrate(p, z, i, bottom, h)?;
    let mut ys: Vec<f64> = dy.into_iter().rev().collect();
    let mut xs: Vec<f64> = dx.into_iter().rev().collect();
    let mut slopes: Vec<f64> = ds.into_iter().rev().collect();
    ys.pop();
    xs.pop();
    slopes.pop();
    ys.extend(uy);
    xs.extend(ux);
    slopes.extend(us);
    Ok(Leaf {
        ys,
        xs,
        slopes,
        order: LeafOrder::Finite(i),
        base: z,
        kappa,
        marginal: kappa < c.kappa_half(),
        certificate: None,
    })
}

/// C² distance of two leaf graphs on their common y-range.
pub fn leaf_c2_distance(a: &Leaf, b: &Leaf) -> f64 {
    let lo = a.ys[0].max(b.ys[0]);
    let hi = a.ys.last().unwrap().min(*b.ys.last().unwrap());
    if hi <= lo {
        return f64::INFINITY;
    }
    let n = 64;
    let h = (hi - lo) / n as f64;
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    let mut prev: Option<f64> = None;
    for k in 0..=n {
        let y = lo + h * k as f64;
        d0 = d0.max((a.x_at(y) - b.x_at(y)).abs());
        let s = a.dxdy(y) - b.dxdy(y);
        d1 = d1.max(s.abs());
        if let Some(ps) = prev {
            d2 = d2.max(((s - ps) / h).abs());
        }
        prev = Some(s);
    }
    d0 + d1 + d2
}

pub const LIMIT_TOLERANCE: f64 = 1e-12;
pub const MAX_LEAF_ORDER: usize = 40;

/// Leaf of order n*, the first order whose C² change from the previous order is below 1e-12.
pub fn limit_leaf(p: &FamilyParams, z: Point) -> Result<Leaf> {
    let mut prev = leaf_of_order(p, z, 1)?;
    let mut diffs = Vec::new();
    for i in 2..=MAX_LEAF_ORDER {
        let next = leaf_of_order(p, z, i)?;
        let d = leaf_c2_distance(&next, &prev);
        diffs.push(d);
        prev = next;
        if d < LIMIT_TOLERANCE {
            break;
        }
    }
    let n = prev.order.value();
    prev.order = LeafOrder::Limit(n);
    let fitted_ratio = geometric_ratio(&diffs, 1e-15);
    prev.certificate = Some(ContractionCertificate { successive: diffs, fitted_ratio });
    Ok(prev)
}

/// True if the horizontal gap between two leaves changes sign on their common range.
pub fn leaves_cross(a: &Leaf, b: &Leaf) -> bool {
    let lo = a.ys[0].max(b.ys[0]);
    let hi = a.ys.last().unwrap().min(*b.ys.last().unwrap());
    let n = 128;
    let mut sign = 0.0;
    for k in 0..=n {
        let y = lo + (hi - lo) * k as f64 / n as f64;
        let g = a.x_at(y) - b.x_at(y);
        if g == 0.0 {
            continue;
        }
        if sign == 0.0 {
            sign = g.signum();
        } else if g.signum() != sign {
            return true;
        }
    }
    false
}

/// |fⁿξ − fⁿη| for the two leaf ends, n = 0..=steps.
pub fn endpoint_contraction(p: &FamilyParams, leaf: &Leaf, steps: usize) -> Vec<f64> {
    let mut u = leaf.lower_end();
    let mut v = leaf.upper_end();
    let mut out = vec![u.dist(v)];
    for _ in 0..steps {
        u = apply(p, u);
        v = apply(p, v);
        out.push(u.dist(v));
    }
    out
}

/// Per-step contraction factor of the leaf ends over the resolved range. The fit stops
/// at the first non-decrease, where the separation has reached the leaf's own accuracy
/// and the unstable component of that error starts to grow.
pub fn fitted_contraction(distances: &[f64], floor: f64) -> f64 {
    let mut resolved = vec![distances[0]];
    for w in distances.windows(2) {
        if w[1] >= w[0] || w[1] <= floor {
            break;
        }
        resolved.push(w[1]);
    }
    geometric_ratio(&resolved, floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Intersection {
    Empty,
    Tangency(Point),
    Two([Point; 2]),
    /// Crossing counts other than 0 or 2 (curve ends inside the leaf's strip, or several folds).
    Crossings(Vec<Point>),
}

pub const TANGENCY_DISCRIMINANT: f64 = 1e-12;

fn quadratic_fit(ts: &[f64], hs: &[f64]) -> Option<(f64, f64, f64)> {
    let c = crate::manifolds::polyfit(ts, hs, 2)?;
    Some((c[2], c[1], c[0]))
}

/// Classify the intersection of a leaf with a curve (typically the image of a horizontal curve through the fold).
pub fn leaf_curve_intersection(leaf: &Leaf, curve: &Curve) -> Result<Intersection> {
    let (lo, hi) = leaf.y_range();
    let v = &curve.vertices;
    let mut s = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for (k, z) in v.iter().enumerate() {
        if k > 0 {
            acc += v[k - 1].dist(*z);
        }
        s.push(acc);
    }
    let h: Vec<Option<f64>> = v.iter().map(|z| if z.y >= lo && z.y <= hi { Some(z.x - leaf.x_at(z.y)) } else { None }).collect();
    let mut roots: Vec<(f64, Point)> = Vec::new();
    for k in 0..v.len() {
        match h[k] {
            Some(hk) if hk == 0.0 => roots.push((s[k], v[k])),
            Some(hk) => {
                if k + 1 < v.len() {
                    if let Some(hn) = h[k + 1] {
                        if hn != 0.0 && hk.signum() != hn.signum() {
                            let u = hk / (hk - hn);
                            roots.push((s[k] + u * (s[k + 1] - s[k]), v[k] + (v[k + 1] - v[k]) * u));
                        }
                    }
                }
            }
            None => {}
        }
    }
    // local quadratic model of the signed distance at its smallest |h|
    let kmin = (0..v.len()).filter(|k| h[*k].is_some()).min_by(|a, b| h[*a].unwrap().abs().total_cmp(&h[*b].unwrap().abs()));
    let kmin = match kmin {
        None => return Ok(Intersection::Empty),
        Some(k) => k,
    };
    let lo_k = kmin.saturating_sub(3);
    let hi_k = (kmin + 3).min(v.len() - 1);
    let idx: Vec<usize> = (lo_k..=hi_k).filter(|k| h[*k].is_some()).collect();
    let fit = if idx.len() >= 3 {
        let scale = (s[idx[idx.len() - 1]] - s[idx[0]]).max(1e-300);
        let ts: Vec<f64> = idx.iter().map(|k| (s[*k] - s[kmin]) / scale).collect();
        let hs: Vec<f64> = idx.iter().map(|k| h[*k].unwrap()).collect();
        quadratic_fit(&ts, &hs).map(|(a, b, c)| (a, b, c, scale))
    } else {
        None
    };
    // normalized discriminant: squared half-separation of the model's roots, in arclength units
    let model = fit.and_then(|(a, b, c, scale)| {
        if a == 0.0 {
            return None;
        }
        let disc = (b * b - 4.0 * a * c) / (4.0 * a * a) * scale * scale;
        let t0 = -b / (2.0 * a);
        Some((disc, s[kmin] + t0 * scale))
    });
    let point_at = |sv: f64| -> Point {
        let k = s.partition_point(|x| *x <= sv).clamp(1, s.len() - 1) - 1;
        let d = s[k + 1] - s[k];
        let u = if d > 0.0 { ((sv - s[k]) / d).clamp(0.0, 1.0) } else { 0.0 };
        v[k] + (v[k + 1] - v[k]) * u
    };
    match roots.len() {
        0 => match model {
            Some((disc, sv)) if disc >= -TANGENCY_DISCRIMINANT => Ok(Intersection::Tangency(point_at(sv))),
            _ => Ok(Intersection::Empty),
        },
        1 => {
            let (r, z) = roots[0];
            let double = kmin > 0 && kmin + 1 < v.len() && matches!(h[kmin], Some(x) if x == 0.0) && {
                let (a, b) = (h[kmin - 1], h[kmin + 1]);
                matches!((a, b), (Some(a), Some(b)) if a.signum() == b.signum())
            };
            if double || matches!(model, Some((d, _)) if d.abs() <= TANGENCY_DISCRIMINANT && (r - s[kmin]).abs() < 1e-6) && double {
                Ok(Intersection::Tangency(z))
            } else {
                Ok(Intersection::Crossings(vec![z]))
            }
        }
        2 => {
            let sep = (roots[1].0 - roots[0].0).abs();
            if let Some((disc, sv)) = model {
                if disc.abs() <= TANGENCY_DISCRIMINANT {
                    if sep > 1e-5 {
                        return Err(Error::AmbiguousTangency);
                    }
                    return Ok(Intersection::Tangency(point_at(sv)));
                }
            }
            Ok(Intersection::Two([roots[0].1, roots[1].1]))
        }
        _ => Ok(Intersection::Crossings(roots.into_iter().map(|r| r.1).collect())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub projected: Vec<Point>,
    /// |π(ηₖ) − π(ηₖ₊₁)| / |ηₖ − ηₖ₊₁| for consecutive inputs.
    pub ratios: Vec<f64>,
    /// max log(ratio)/√b.
    pub measured_c: f64,
}

/// Slide each point along its limit leaf onto the target curve.
pub fn project_along_leaves(p: &FamilyParams, points: &[Point], target: &Curve) -> Result<ProjectionReport> {
    let mut projected = Vec::with_capacity(points.len());
    for z in points {
        let leaf = limit_leaf(p, *z)?;
        let hit = match leaf_curve_intersection(&leaf, target)? {
            Intersection::Crossings(v) if v.len() == 1 => v[0],
            Intersection::Tangency(q) => q,
            Intersection::Two(v) => {
                if v[0].dist(*z) <= v[1].dist(*z) {
                    v[0]
                } else {
                    v[1]
                }
            }
            Intersection::Crossings(v) if !v.is_empty() => *v.iter().min_by(|a, b| a.dist(*z).total_cmp(&b.dist(*z))).unwrap(),
            _ => return Err(Error::LeafMissesTarget),
        };
        projected.push(hit);
    }
    let ratios: Vec<f64> = (1..points.len())
        .filter_map(|k| {
            let d = points[k].dist(points[k - 1]);
            (d > 0.0).then(|| projected[k].dist(projected[k - 1]) / d)
        })
        .collect();
    let sb = p.sqrt_b();
    let measured_c = ratios.iter().map(|r| r.ln() / sb).fold(f64::NEG_INFINITY, f64::max);
    Ok(ProjectionReport { projected, ratios, measured_c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_core::Orientation;

    fn vertical_leaf(x0: f64) -> Leaf {
        let ys: Vec<f64> = (0..=40).map(|k| -2.0 + 0.1 * k as f64).collect();
        Leaf {
            xs: vec![x0; ys.len()],
            slopes: vec![0.0; ys.len()],
            ys,
            order: LeafOrder::Finite(1),
            base: Point::new(x0, 0.0),
            kappa: 1.0,
            marginal: false,
            certificate: None,
        }
    }

    fn parabola() -> Curve {
        Curve::new((0..=400).map(|k| {
            let y = -1.5 + 3.0 * k as f64 / 400.0;
            Point::new(y * y, y)
        }).collect())
    }

    #[test]
    fn parabola_two_points() {
        match leaf_curve_intersection(&vertical_leaf(1.0), &parabola()).unwrap() {
            Intersection::Two([a, b]) => {
                assert!((a.y + 1.0).abs() < 1e-4 && (b.y - 1.0).abs() < 1e-4);
                assert!((a.x - 1.0).abs() < 1e-10 && (b.x - 1.0).abs() < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parabola_tangency() {
        match leaf_curve_intersection(&vertical_leaf(0.0), &parabola()).unwrap() {
            Intersection::Tangency(z) => assert!(z.norm() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_field() {
        let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
        assert!(matches!(leaf_of_order(&p, Point::new(0.5, 0.0), 1), Err(Error::FieldDegenerate { .. })));
    }

    #[test]
    fn base_on_leaf() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        let z = Point::new(0.7, 0.003);
        let l = limit_leaf(&p, z).unwrap();
        assert!((l.x_at(z.y) - z.x).abs() < 1e-15);
    }
}
