//! Fixed saddles, invariant manifold continuation, the trapping region R₀ and curve classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_core::{apply, inverse_apply, jacobian, FamilyParams, Mat2, Orientation, Point, RegionTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaddleLabel {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saddle {
    pub location: Point,
    pub lambda_u: f64,
    pub lambda_s: f64,
    pub e_u: Point,
    pub e_s: Point,
    pub label: SaddleLabel,
}

fn newton_fixed(p: &FamilyParams, seed: Point) -> Result<Point> {
    let mut z = seed;
    for _ in 0..50 {
        let r = apply(p, z) - z;
        let j = jacobian(p, z).add(&Mat2::identity().scale(-1.0));
        let step = j.inverse().ok_or(Error::NewtonDiverged)?.apply(r);
        z = z - step;
        if !z.is_finite() || z.norm() > 1e3 {
            return Err(Error::NewtonDiverged);
        }
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    if (apply(p, z) - z).norm() > 1e-12 {
        return Err(Error::NewtonDiverged);
    }
    Ok(z)
}

fn saddle_at(p: &FamilyParams, z: Point, label: SaddleLabel) -> Result<Saddle> {
    let j = jacobian(p, z);
    let (lu, ls) = j.real_eigenvalues().ok_or(Error::NewtonDiverged)?;
    let e_u = j.eigenvector(lu);
    let e_s = if p.b == 0.0 { Point::new(0.0, 1.0) } else { j.eigenvector(ls) };
    Ok(Saddle { location: z, lambda_u: lu, lambda_s: ls, e_u, e_s, label })
}

/// The two fixed saddles, P near (1/2, 0) and Q near (−1, 0).
pub fn find_fixed_points(p: &FamilyParams) -> Result<(Saddle, Saddle)> {
    let sb = p.sqrt_b();
    let s = p.sigma();
    let zp = newton_fixed(p, Point::new(0.5, s * sb * 0.5))?;
    let zq = newton_fixed(p, Point::new(-1.0, -s * sb))?;
    Ok((saddle_at(p, zp, SaddleLabel::P)?, saddle_at(p, zq, SaddleLabel::Q)?))
}

/// Polyline with tangent and discrete curvature metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub vertices: Vec<Point>,
    pub tangents: Vec<Point>,
    pub curvature: Vec<f64>,
}

/// Curvature of the circle through three points.
pub fn menger_curvature(a: Point, b: Point, c: Point) -> f64 {
    let ab = a.dist(b);
    let bc = b.dist(c);
    let ca = c.dist(a);
    let area2 = (b - a).cross(c - a).abs();
    let den = ab * bc * ca;
    if den == 0.0 {
        0.0
    } else {
        2.0 * area2 / den
    }
}

impl Curve {
    pub fn new(vertices: Vec<Point>) -> Self {
        let n = vertices.len();
        let mut tangents = Vec::with_capacity(n);
        let mut curvature = vec![0.0; n];
        for i in 0..n {
            let t = if n < 2 {
                Point::new(1.0, 0.0)
            } else if i == 0 {
                vertices[1] - vertices[0]
            } else if i == n - 1 {
                vertices[n - 1] - vertices[n - 2]
            } else {
                vertices[i + 1] - vertices[i - 1]
            };
            tangents.push(if t.norm() > 0.0 { t.normalized() } else { Point::new(1.0, 0.0) });
            if i > 0 && i + 1 < n {
                curvature[i] = menger_curvature(vertices[i - 1], vertices[i], vertices[i + 1]);
            }
        }
        if n >= 3 {
            curvature[0] = curvature[1];
            curvature[n - 1] = curvature[n - 2];
        }
        Curve { vertices, tangents, curvature }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn arclength(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    pub fn max_curvature(&self) -> f64 {
        self.curvature.iter().cloned().fold(0.0, f64::max)
    }

    /// Point at arclength fraction s ∈ [0, 1] by linear interpolation.
    pub fn point_at_fraction(&self, s: f64) -> Point {
        let total = self.arclength();
        let target = s.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        for w in self.vertices.windows(2) {
            let d = w[0].dist(w[1]);
            if acc + d >= target && d > 0.0 {
                let u = (target - acc) / d;
                return w[0] + (w[1] - w[0]) * u;
            }
            acc += d;
        }
        *self.vertices.last().unwrap()
    }

    pub fn midpoint(&self) -> Point {
        self.point_at_fraction(0.5)
    }

    pub fn reversed(&self) -> Curve {
        let mut v = self.vertices.clone();
        v.reverse();
        Curve::new(v)
    }

    /// Sub-curve of vertices with index in [i, j].
    pub fn slice(&self, i: usize, j: usize) -> Curve {
        Curve::new(self.vertices[i..=j].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveClass {
    pub horizontal: bool,
    pub c2b: bool,
    pub vertical: bool,
    pub max_slope: f64,
    pub max_curvature: f64,
    /// max(|x′(y)|, |x″(y)|)/√b over the curve as a graph over y (infinite if not a graph).
    pub vertical_constant: f64,
}

impl CurveClass {
    pub fn none(&self) -> bool {
        !(self.horizontal || self.c2b || self.vertical)
    }
}

pub const VERTICAL_CONSTANT: f64 = 10.0;

pub fn classify_curve(curve: &Curve, b: f64) -> CurveClass {
    let v = &curve.vertices;
    let sb = b.sqrt();
    let max_slope = v.windows(2).map(|w| (w[1] - w[0]).slope()).fold(0.0, f64::max);
    let max_curvature = curve.max_curvature();
    let horizontal = max_slope <= 0.1 && max_curvature <= 0.1;
    let c2b = max_slope <= sb && max_curvature <= sb;
    let vertical_constant = vertical_graph_constant(v, sb);
    let vertical = v.len() >= 3 && vertical_constant <= VERTICAL_CONSTANT;
    CurveClass { horizontal, c2b, vertical, max_slope, max_curvature, vertical_constant }
}

fn vertical_graph_constant(v: &[Point], sb: f64) -> f64 {
    if v.len() < 3 {
        return f64::INFINITY;
    }
    let dir = (v[1].y - v[0].y).signum();
    if dir == 0.0 || v.windows(2).any(|w| (w[1].y - w[0].y).signum() != dir) {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for i in 1..v.len() - 1 {
        let h0 = v[i].y - v[i - 1].y;
        let h1 = v[i + 1].y - v[i].y;
        let d0 = (v[i].x - v[i - 1].x) / h0;
        let d1 = (v[i + 1].x - v[i].x) / h1;
        let d2 = 2.0 * (d1 - d0) / (h0 + h1);
        worst = worst.max(d0.abs()).max(d1.abs()).max(d2.abs());
    }
    if sb == 0.0 {
        if worst == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        worst / sb
    }
}

/// Curvature of the n-fold pullback of a curve, vs the bound 5^{3n}.
pub fn free_segment_curvature_check(p: &FamilyParams, curve: &Curve, n: usize) -> Result<(bool, f64)> {
    let mut pts = curve.vertices.clone();
    for _ in 0..n {
        pts = pts.iter().map(|z| inverse_apply(p, *z)).collect::<Result<Vec<_>>>()?;
    }
    let mut kept: Vec<Point> = Vec::with_capacity(pts.len());
    for z in pts {
        if kept.last().map_or(true, |l: &Point| l.dist(z) > 1e-12) {
            kept.push(z);
        }
    }
    let k = Curve::new(kept).max_curvature();
    Ok((k <= 5f64.powi(3 * n as i32), k))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    pub t0: f64,
    pub max_spacing: f64,
    pub max_turn: f64,
    pub vertex_cap: usize,
    pub max_levels: usize,
    pub box_half_width: f64,
    pub min_segment: f64,
}

impl GrowthOptions {
    /// Dense sampling used for region boundaries, where chord error enters membership tests.
    pub fn fine() -> Self {
        GrowthOptions { max_spacing: 2e-5, max_turn: 1e-3, ..Default::default() }
    }
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            t0: 1e-7,
            max_spacing: 1e-3,
            max_turn: 0.05,
            vertex_cap: 4_000_000,
            max_levels: 200,
            box_half_width: 2.0,
            min_segment: 1e-13,
        }
    }
}

/// One branch of an unstable manifold. `pre[i]` is a point whose image under the
/// growth map (f or f∘f) is `vertices[i]`; it is NaN for the seed segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub vertices: Vec<Point>,
    pub pre: Vec<Point>,
    pub map_power: usize,
    pub levels: usize,
    pub exited_box: bool,
    pub arclength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnstableManifold {
    pub saddle: Saddle,
    pub plus: Branch,
    pub minus: Branch,
}

impl UnstableManifold {
    pub fn exited_box(&self) -> bool {
        self.plus.exited_box || self.minus.exited_box
    }

    /// Both branches joined through the saddle: (vertices, preimages, saddle index).
    pub fn combined(&self) -> (Vec<Point>, Vec<Point>, Vec<usize>, usize) {
        let mut v: Vec<Point> = self.minus.vertices.iter().rev().cloned().collect();
        let mut pre: Vec<Point> = self.minus.pre.iter().rev().cloned().collect();
        let mut pw: Vec<usize> = vec![self.minus.map_power; v.len()];
        let idx = v.len();
        v.push(self.saddle.location);
        pre.push(Point::new(f64::NAN, f64::NAN));
        pw.push(0);
        v.extend_from_slice(&self.plus.vertices);
        pre.extend_from_slice(&self.plus.pre);
        pw.extend(std::iter::repeat(self.plus.map_power).take(self.plus.vertices.len()));
        (v, pre, pw, idx)
    }

    pub fn curve(&self) -> Curve {
        Curve::new(self.combined().0)
    }
}

fn growth_map(p: &FamilyParams, power: usize, z: Point) -> Point {
    let mut w = z;
    for _ in 0..power {
        w = apply(p, w);
    }
    w
}

fn turn_angle(a: Point, m: Point, b: Point) -> f64 {
    let u = m - a;
    let v = b - m;
    if u.norm() == 0.0 || v.norm() == 0.0 {
        return 0.0;
    }
    u.cross(v).atan2(u.dot(v)).abs()
}

fn hermite(q0: Point, q1: Point, m0: Point, m1: Point, u: f64) -> Point {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    q0 * h00 + m0 * h10 + q1 * h01 + m1 * h11
}

/// Arclength derivative estimates at each vertex of a polyline.
fn vertex_derivatives(v: &[Point]) -> Vec<Point> {
    let n = v.len();
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        if n < 2 {
            d.push(Point::new(1.0, 0.0));
        } else if i == 0 || i == n - 1 {
            let (a, b) = if i == 0 { (v[0], v[1]) } else { (v[n - 2], v[n - 1]) };
            let h = a.dist(b);
            d.push(if h > 0.0 { (b - a) * (1.0 / h) } else { Point::new(1.0, 0.0) });
        } else {
            let h0 = v[i].dist(v[i - 1]);
            let h1 = v[i + 1].dist(v[i]);
            if h0 == 0.0 || h1 == 0.0 {
                d.push(Point::new(0.0, 0.0));
                continue;
            }
            let s0 = (v[i] - v[i - 1]) * (1.0 / h0);
            let s1 = (v[i + 1] - v[i]) * (1.0 / h1);
            d.push((s0 * h1 + s1 * h0) * (1.0 / (h0 + h1)));
        }
    }
    d
}

struct LevelBuilder<'a> {
    p: &'a FamilyParams,
    power: usize,
    opts: &'a GrowthOptions,
    out: Vec<Point>,
    pre: Vec<Point>,
}

impl LevelBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, q0: Point, q1: Point, m0: Point, m1: Point, ua: f64, ub: f64, pa: Point, pb: Point, qb: Point, depth: u32) {
        let um = 0.5 * (ua + ub);
        let qm = hermite(q0, q1, m0, m1, um);
        let pm = growth_map(self.p, self.power, qm);
        let d = pa.dist(pb);
        let ok = d <= self.opts.max_spacing && turn_angle(pa, pm, pb) <= self.opts.max_turn;
        if ok || depth >= 48 || d < self.opts.min_segment || !pm.is_finite() {
            self.out.push(pb);
            self.pre.push(qb);
            return;
        }
        self.refine(q0, q1, m0, m1, ua, um, pa, pm, qm, depth + 1);
        self.refine(q0, q1, m0, m1, um, ub, pm, pb, qb, depth + 1);
    }
}

pub fn grow_branch(p: &FamilyParams, saddle: &Saddle, side: f64, arc_budget: f64, opts: &GrowthOptions) -> Result<Branch> {
    let lam = saddle.lambda_u;
    let power = if lam > 0.0 { 1 } else { 2 };
    let mu = lam.abs().powi(power as i32);
    let z = saddle.location;
    let e = saddle.e_u;
    let seeds = 16;
    let mut level: Vec<Point> = (0..=seeds)
        .map(|i| {
            let t = opts.t0 * (1.0 + (mu - 1.0) * i as f64 / seeds as f64);
            z + e * (side * t)
        })
        .collect();
    let mut vertices = level.clone();
    let mut pre = vec![Point::new(f64::NAN, f64::NAN); level.len()];
    let mut arclength: f64 = level.windows(2).map(|w| w[0].dist(w[1])).sum();
    let mut exited = false;
    let mut levels = 0;
    'outer: for _ in 0..opts.max_levels {
        if arclength >= arc_budget {
            break;
        }
        levels += 1;
        let ders = vertex_derivatives(&level);
        let mut builder = LevelBuilder { p, power, opts, out: Vec::new(), pre: Vec::new() };
        let first = growth_map(p, power, level[0]);
        builder.out.push(first);
        builder.pre.push(level[0]);
        for i in 0..level.len() - 1 {
            let q0 = level[i];
            let q1 = level[i + 1];
            let h = q0.dist(q1);
            let m0 = ders[i] * h;
            let m1 = ders[i + 1] * h;
            let pa = *builder.out.last().unwrap();
            let pb = growth_map(p, power, q1);
            builder.refine(q0, q1, m0, m1, 0.0, 1.0, pa, pb, q1, 0);
            if vertices.len() + builder.out.len() > opts.vertex_cap {
                return Err(Error::ResolutionExhausted { cap: opts.vertex_cap });
            }
        }
        let new_level = builder.out;
        let new_pre = builder.pre;
        for (k, (v, q)) in new_level.iter().zip(new_pre.iter()).enumerate() {
            if k == 0 {
                continue;
            }
            let last = *vertices.last().unwrap();
            vertices.push(*v);
            pre.push(*q);
            arclength += last.dist(*v);
            let bw = opts.box_half_width;
            if !(v.x.abs() <= bw && v.y.abs() <= bw) {
                exited = true;
                break 'outer;
            }
            if arclength >= arc_budget {
                break 'outer;
            }
        }
        level = new_level;
    }
    Ok(Branch { vertices, pre, map_power: power, levels, exited_box: exited, arclength })
}

pub fn grow_unstable_manifold(p: &FamilyParams, saddle: &Saddle, arc_budget: f64) -> Result<UnstableManifold> {
    grow_unstable_manifold_with(p, saddle, arc_budget, &GrowthOptions::default())
}

pub fn grow_unstable_manifold_with(p: &FamilyParams, saddle: &Saddle, arc_budget: f64, opts: &GrowthOptions) -> Result<UnstableManifold> {
    let plus = grow_branch(p, saddle, 1.0, arc_budget, opts)?;
    let minus = grow_branch(p, saddle, -1.0, arc_budget, opts)?;
    Ok(UnstableManifold { saddle: *saddle, plus, minus })
}

/// Local maximization of `objective` along a grown manifold near a vertex, by
/// golden-section search over a quadratic through the neighbouring preimages.
pub fn refine_extremum<F: Fn(Point) -> f64>(
    p: &FamilyParams,
    vertices: &[Point],
    pre: &[Point],
    powers: &[usize],
    idx: usize,
    objective: F,
) -> (Point, f64) {
    let base = (vertices[idx], objective(vertices[idx]));
    if idx == 0 || idx + 1 >= vertices.len() {
        return base;
    }
    let (qa, qb, qc) = (pre[idx - 1], pre[idx], pre[idx + 1]);
    let pw = powers[idx];
    if !(qa.is_finite() && qb.is_finite() && qc.is_finite()) || pw == 0 || powers[idx - 1] != pw || powers[idx + 1] != pw {
        return base;
    }
    let ta = -qa.dist(qb);
    let tc = qc.dist(qb);
    if ta == 0.0 || tc == 0.0 {
        return base;
    }
    // Lagrange quadratic through (ta, qa), (0, qb), (tc, qc)
    let q_of = |t: f64| -> Point {
        let la = t * (t - tc) / (ta * (ta - tc));
        let lb = (t - ta) * (t - tc) / (ta * tc);
        let lc = t * (t - ta) / (tc * (tc - ta));
        qa * la + qb * lb + qc * lc
    };
    let h = |t: f64| objective(growth_map(p, pw, q_of(t)));
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (ta, tc);
    let mut x1 = hi - gr * (hi - lo);
    let mut x2 = lo + gr * (hi - lo);
    let mut f1 = h(x1);
    let mut f2 = h(x2);
    for _ in 0..120 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = h(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = h(x1);
        }
        if (hi - lo).abs() < 1e-18 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let z = growth_map(p, pw, q_of(t));
    let val = objective(z);
    if val >= base.1 {
        (z, val)
    } else {
        base
    }
}

/// Side of Wˢ_loc(q) on which z lies: −1 left, +1 right, None if undecided.
pub fn ws_side(p: &FamilyParams, q: Point, z: Point) -> Option<i8> {
    let mut w = z;
    for _ in 0..400 {
        let dx = w.x - q.x;
        if !w.is_finite() || dx < -0.25 {
            return Some(-1);
        }
        if dx > 0.25 {
            return Some(1);
        }
        w = apply(p, w);
    }
    None
}

/// x such that f^k(x, y) lies on Wˢ_loc(q), by bisection over `bracket`.
pub fn stable_x_at(p: &FamilyParams, q: Point, y: f64, k: usize, bracket: (f64, f64)) -> Option<f64> {
    let side = |x: f64| ws_side(p, q, growth_map(p, k, Point::new(x, y)));
    let (mut lo, mut hi) = bracket;
    let slo = side(lo)?;
    let shi = side(hi)?;
    if slo == shi {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match side(mid) {
            Some(s) if s == slo => lo = mid,
            Some(_) => hi = mid,
            None => return Some(mid),
        }
    }
    Some(0.5 * (lo + hi))
}

/// A stable-manifold piece represented as a graph x(y), with a smooth polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableGraph {
    pub ys: Vec<f64>,
    pub xs: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub y_center: f64,
    pub y_scale: f64,
    pub fit_residual: f64,
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// Least-squares polynomial of the given degree in t = (y − center)/scale.
pub fn polyfit(ts: &[f64], xs: &[f64], degree: usize) -> Option<Vec<f64>> {
    let m = degree + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut atb = vec![0.0; m];
    for (t, x) in ts.iter().zip(xs) {
        let mut pow = vec![1.0; m];
        for k in 1..m {
            pow[k] = pow[k - 1] * t;
        }
        for i in 0..m {
            atb[i] += pow[i] * x;
            for j in 0..m {
                ata[i][j] += pow[i] * pow[j];
            }
        }
    }
    solve_linear(ata, atb)
}

impl StableGraph {
    pub fn from_samples(ys: Vec<f64>, xs: Vec<f64>) -> Option<Self> {
        let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let y_center = 0.5 * (ymin + ymax);
        let y_scale = (0.5 * (ymax - ymin)).max(1e-300);
        let ts: Vec<f64> = ys.iter().map(|y| (y - y_center) / y_scale).collect();
        let degree = 4.min(ys.len().saturating_sub(1));
        let coeffs = polyfit(&ts, &xs, degree)?;
        let mut g = StableGraph { ys, xs, coeffs, y_center, y_scale, fit_residual: 0.0 };
        g.fit_residual = g.ys.iter().zip(&g.xs).map(|(y, x)| (g.x_at(*y) - x).abs()).fold(0.0, f64::max);
        Some(g)
    }

    pub fn x_at(&self, y: f64) -> f64 {
        let t = (y - self.y_center) / self.y_scale;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn dxdy(&self, y: f64) -> f64 {
        let t = (y - self.y_center) / self.y_scale;
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * t + c * k as f64;
        }
        acc / self.y_scale
    }

    pub fn curve(&self) -> Curve {
        Curve::new(self.ys.iter().zip(&self.xs).map(|(y, x)| Point::new(*x, *y)).collect())
    }
}

/// Wˢ_loc(Q) as a graph over |y − y_Q| ≤ half_height (pre_steps = 0), or the piece
/// f^{−k}Wˢ_loc(Q) near the given x seed.
pub fn stable_graph(p: &FamilyParams, q: &Saddle, k: usize, x_bracket: (f64, f64), y_range: (f64, f64), n: usize) -> Result<StableGraph> {
    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev nodes keep the fit well conditioned
        let th = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
        let y = 0.5 * (y_range.0 + y_range.1) - 0.5 * (y_range.1 - y_range.0) * th.cos();
        let x = stable_x_at(p, q.location, y, k, x_bracket).ok_or_else(|| {
            Error::BoundaryNotClosed(format!("stable manifold piece f^-{k} not bracketed at y = {y:e}"))
        })?;
        ys.push(y);
        xs.push(x);
    }
    StableGraph::from_samples(ys, xs).ok_or_else(|| Error::BoundaryNotClosed("stable graph fit failed".into()))
}

pub fn ws_loc_graph(p: &FamilyParams, q: &Saddle) -> Result<StableGraph> {
    let sb = p.sqrt_b();
    let h = 2.5 * sb.max(1e-6);
    stable_graph(p, q, 0, (q.location.x - 0.2, q.location.x + 0.2), (-h, h), 33)
}

/// The branch f^{−1}Wˢ_loc(Q) near x ≈ 1 (the right side of the stable parabola).
pub fn ws_plus_graph(p: &FamilyParams, q: &Saddle) -> Result<StableGraph> {
    let sb = p.sqrt_b();
    let h = 2.5 * sb.max(1e-6);
    stable_graph(p, q, 1, (0.6, 1.6), (-h, h), 33)
}

pub fn ws_plus_x(p: &FamilyParams, q: &Saddle, y: f64) -> Option<f64> {
    stable_x_at(p, q.location, y, 1, (0.6, 1.6))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerKind {
    /// The unstable side meets Wˢ_loc(Q) transversally (or at the saddle itself).
    Crossing,
    /// The unstable side turns back before reaching Wˢ_loc(Q); closed by a horizontal connector.
    Connector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionR0 {
    pub a: f64,
    pub b: f64,
    pub orientation: Orientation,
    pub ws_loc: StableGraph,
    /// Unstable side as a graph x(y), y ascending.
    pub arc_y: Vec<f64>,
    pub arc_x: Vec<f64>,
    pub y_lo: f64,
    pub y_hi: f64,
    pub corners: [CornerKind; 2],
    /// Horizontal connector lengths at the lower and upper ends.
    pub gaps: [f64; 2],
    pub tip: Point,
    pub saddle_p: Saddle,
    pub saddle_q: Saddle,
    pub d1_y_bound: f64,
    /// Slack on the unstable side absorbing polyline chord error. Orbits never
    /// leave R₀ across Wᵘ, only through Wˢ_loc(Q), so the slack cannot hide an exit.
    pub arc_tolerance: f64,
}

pub const GAP_TOLERANCE: f64 = 0.25;
pub const ARC_TOLERANCE: f64 = 1e-8;
pub const D1_Y_FACTOR: f64 = 1.2;

impl RegionR0 {
    pub fn ws_loc_x(&self, y: f64) -> f64 {
        self.ws_loc.x_at(y)
    }

    pub fn ws_loc_dxdy(&self, y: f64) -> f64 {
        self.ws_loc.dxdy(y)
    }

    /// x-coordinate of the unstable side at height y (inside [y_lo, y_hi]).
    pub fn arc_x_at(&self, y: f64) -> Option<f64> {
        if !(y >= self.y_lo && y <= self.y_hi) {
            return None;
        }
        let ys = &self.arc_y;
        let i = ys.partition_point(|v| *v < y);
        if i == 0 {
            return Some(self.arc_x[0]);
        }
        if i >= ys.len() {
            return Some(*self.arc_x.last().unwrap());
        }
        let (y0, y1) = (ys[i - 1], ys[i]);
        let (x0, x1) = (self.arc_x[i - 1], self.arc_x[i]);
        if y1 == y0 {
            return Some(x0.max(x1));
        }
        Some(x0 + (x1 - x0) * (y - y0) / (y1 - y0))
    }

    /// Crossing parity of a horizontal ray to +∞ against the closed boundary.
    pub fn contains(&self, z: Point) -> bool {
        if self.b == 0.0 {
            return z.y == 0.0 && z.x >= self.saddle_q.location.x && z.x <= self.tip.x;
        }
        let t = self.arc_tolerance;
        if !(z.y >= self.y_lo - t && z.y <= self.y_hi + t) {
            return false;
        }
        match self.arc_x_at(z.y.clamp(self.y_lo, self.y_hi)) {
            None => false,
            Some(xa) => {
                let crosses_arc = z.x <= xa + t;
                let crosses_ws = z.x < self.ws_loc_x(z.y);
                crosses_arc ^ crosses_ws
            }
        }
    }

    pub fn in_d1(&self, z: Point) -> bool {
        z.x < self.ws_loc_x(z.y) && z.y.abs() <= self.d1_y_bound
    }

    pub fn in_d0(&self, z: Point) -> bool {
        !self.contains(z) && z.x >= std::f64::consts::SQRT_2
    }

    pub fn tag(&self, z: Point) -> RegionTag {
        if self.contains(z) {
            RegionTag::InR0
        } else if self.in_d1(z) {
            RegionTag::InD1
        } else {
            RegionTag::Escaping
        }
    }

    /// I(δ) = {z ∈ R₀ : |x| < δ}.
    pub fn in_critical_strip(&self, z: Point, delta: f64) -> bool {
        z.x.abs() < delta && self.contains(z)
    }

    /// Closed boundary polyline: unstable side, connectors, and the Wˢ_loc(Q) segment.
    pub fn boundary(&self) -> Vec<Point> {
        let mut out: Vec<Point> = self.arc_y.iter().zip(&self.arc_x).map(|(y, x)| Point::new(*x, *y)).collect();
        let n = 64;
        for i in 0..=n {
            let y = self.y_hi - (self.y_hi - self.y_lo) * i as f64 / n as f64;
            out.push(Point::new(self.ws_loc_x(y), y));
        }
        if let Some(f) = out.first().cloned() {
            out.push(f);
        }
        out
    }

    /// Bounding box (xmin, xmax, ymin, ymax).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let xmin = self.ws_loc_x(self.y_lo).min(self.ws_loc_x(self.y_hi)).min(self.ws_loc_x(0.5 * (self.y_lo + self.y_hi)));
        let xmax = self.arc_x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (xmin, xmax, self.y_lo, self.y_hi)
    }

    /// Uniform grid of points of R₀ with the given resolution per axis of the bounding box.
    pub fn grid(&self, n: usize) -> Vec<Point> {
        let (x0, x1, y0, y1) = self.bounds();
        let mut out = Vec::new();
        for j in 0..n {
            let y = y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64;
            for i in 0..n {
                let x = x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64;
                let z = Point::new(x, y);
                if self.contains(z) {
                    out.push(z);
                }
            }
        }
        out
    }
}

/// Which unstable manifold bounds R₀: Wᵘ(Q) when preserving, Wᵘ(P) when reversing.
pub fn boundary_saddle(p: &FamilyParams, ps: &Saddle, qs: &Saddle) -> Saddle {
    match p.orientation {
        Orientation::Preserving => *qs,
        Orientation::Reversing => *ps,
    }
}

pub const R0_ARC_BUDGET: f64 = 7.0;

pub fn build_r0(p: &FamilyParams) -> Result<RegionR0> {
    let (ps, qs) = find_fixed_points(p)?;
    build_r0_with(p, &ps, &qs, &GrowthOptions::fine())
}

pub fn build_r0_with(p: &FamilyParams, ps: &Saddle, qs: &Saddle, opts: &GrowthOptions) -> Result<RegionR0> {
    let sb = p.sqrt_b();
    if p.b == 0.0 {
        let ws = StableGraph { ys: vec![0.0], xs: vec![qs.location.x], coeffs: vec![qs.location.x], y_center: 0.0, y_scale: 1.0, fit_residual: 0.0 };
        return Ok(RegionR0 {
            a: p.a,
            b: 0.0,
            orientation: p.orientation,
            ws_loc: ws,
            arc_y: vec![0.0],
            arc_x: vec![1.0],
            y_lo: 0.0,
            y_hi: 0.0,
            corners: [CornerKind::Crossing; 2],
            gaps: [0.0; 2],
            tip: Point::new(1.0, 0.0),
            saddle_p: *ps,
            saddle_q: *qs,
            d1_y_bound: 0.0,
            arc_tolerance: 0.0,
        });
    }
    let ws = ws_loc_graph(p, qs)?;
    let src = boundary_saddle(p, ps, qs);
    let wu = grow_unstable_manifold_with(p, &src, R0_ARC_BUDGET, opts)?;
    let (v, _, _, _) = wu.combined();
    let tip_idx = v
        .iter()
        .enumerate()
        .filter(|(_, z)| z.y.abs() <= 2.0 * sb && z.x.abs() <= opts.box_half_width)
        .max_by(|a, b| a.1.x.total_cmp(&b.1.x))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::BoundaryNotClosed("no unstable tip found".into()))?;
    let h = |z: Point| z.x - ws.x_at(z.y);
    let walk = |dir: isize| -> Result<(Vec<Point>, CornerKind, f64)> {
        let mut pts = vec![v[tip_idx]];
        let mut i = tip_idx as isize;
        let mut ydir = 0.0;
        loop {
            let j = i + dir;
            if j < 0 || j as usize >= v.len() {
                return Err(Error::BoundaryNotClosed("unstable side ended before closing".into()));
            }
            let (zi, zj) = (v[i as usize], v[j as usize]);
            let dy = zj.y - zi.y;
            if dy != 0.0 {
                if ydir == 0.0 {
                    ydir = dy.signum();
                } else if dy.signum() != ydir {
                    let gap = h(zi);
                    return Ok((pts, CornerKind::Connector, gap));
                }
            }
            let (hi, hj) = (h(zi), h(zj));
            if hj <= 0.0 && hi > 0.0 {
                let u = hi / (hi - hj);
                let mut c = zi + (zj - zi) * u;
                c.x = ws.x_at(c.y);
                pts.push(c);
                return Ok((pts, CornerKind::Crossing, 0.0));
            }
            pts.push(zj);
            i = j;
        }
    };
    let (mut fwd, cf, gf) = walk(1)?;
    let (mut bwd, cb, gb) = walk(-1)?;
    for (g, c) in [(gf, cf), (gb, cb)] {
        if c == CornerKind::Connector && !(g <= GAP_TOLERANCE) {
            return Err(Error::BoundaryNotClosed(format!("corner gap {g:e} exceeds {GAP_TOLERANCE}")));
        }
    }
    bwd.reverse();
    bwd.pop();
    bwd.append(&mut fwd);
    let mut arc = bwd;
    let mut corners = [cb, cf];
    let mut gaps = [gb, gf];
    if arc.first().unwrap().y > arc.last().unwrap().y {
        arc.reverse();
        corners.swap(0, 1);
        gaps.swap(0, 1);
    }
    let arc_y: Vec<f64> = arc.iter().map(|z| z.y).collect();
    let arc_x: Vec<f64> = arc.iter().map(|z| z.x).collect();
    Ok(RegionR0 {
        a: p.a,
        b: p.b,
        orientation: p.orientation,
        y_lo: arc_y[0],
        y_hi: *arc_y.last().unwrap(),
        ws_loc: ws,
        arc_y,
        arc_x,
        corners,
        gaps,
        tip: v[tip_idx],
        saddle_p: *ps,
        saddle_q: *qs,
        d1_y_bound: D1_Y_FACTOR * sb,
        arc_tolerance: ARC_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_fixed_points_exact() {
        let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
        let (ps, qs) = find_fixed_points(&p).unwrap();
        assert!((ps.location.x - 0.5).abs() < 1e-15);
        assert!((qs.location.x + 1.0).abs() < 1e-15);
        assert!((qs.lambda_u - 4.0).abs() < 1e-12);
    }

    #[test]
    fn straight_segment_is_horizontal_and_c2b() {
        let c = Curve::new((0..10).map(|i| Point::new(i as f64 * 0.01, 0.0)).collect());
        let k = classify_curve(&c, 1e-4);
        assert!(k.horizontal && k.c2b && !k.vertical);
    }

    #[test]
    fn steep_parabola_not_c2b() {
        let sb = 0.01;
        let c = Curve::new((0..50).map(|i| {
            let x = -0.05 + 0.1 * i as f64 / 49.0;
            Point::new(x, x * x / (2.0 * sb))
        }).collect());
        assert!(!classify_curve(&c, 1e-4).c2b);
    }

    #[test]
    fn polyfit_recovers_cubic() {
        let ts: Vec<f64> = (0..20).map(|i| -1.0 + i as f64 / 10.0).collect();
        let xs: Vec<f64> = ts.iter().map(|t| 1.0 - 2.0 * t + 0.5 * t * t * t).collect();
        let c = polyfit(&ts, &xs, 3).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12 && c[2].abs() < 1e-12 && (c[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn straight_line_pullback_flat() {
        let p = FamilyParams::new(2.0, 1e-4, Orientation::Preserving);
        let c = Curve::new((0..20).map(|i| Point::new(0.2 + 0.01 * i as f64, 0.003)).collect());
        let (ok, k) = free_segment_curvature_check(&p, &c, 0).unwrap();
        assert!(ok && k < 1e-9);
    }
}
