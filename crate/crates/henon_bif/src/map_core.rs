//! The Hénon-like family, its derivatives, and raw orbit evaluation.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::RegionR0;

pub const OVERFLOW_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// |dy/dx|, infinite for vertical vectors.
    pub fn slope(self) -> f64 {
        if self.x == 0.0 {
            f64::INFINITY
        } else {
            (self.y / self.x).abs()
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A tangent vector attached to a base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: Point,
    pub direction: Point,
}

impl TangentVector {
    pub fn new(base: Point, direction: Point) -> Self {
        TangentVector { base, direction }
    }

    pub fn slope(&self) -> f64 {
        self.direction.slope()
    }

    pub fn is_vertical(&self) -> bool {
        self.direction.x == 0.0
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn apply(&self, v: Point) -> Point {
        Point::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Singular values (σ₁ ≥ σ₂) in closed form.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.m;
        let q = (a + d).hypot(c - b);
        let r = (a - d).hypot(c + b);
        let s1 = 0.5 * (q + r);
        let s2 = if s1 > 0.0 { (self.det().abs() / s1).min(s1) } else { 0.0 };
        (s1, s2)
    }

    /// Operator norm.
    pub fn norm(&self) -> f64 {
        self.singular_values().0
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.m[1][1] / d, -self.m[0][1] / d, -self.m[1][0] / d, self.m[0][0] / d))
    }

    /// Real eigenvalues sorted by decreasing modulus, if real.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let tr = self.m[0][0] + self.m[1][1];
        let disc = tr * tr - 4.0 * self.det();
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let sgn = if tr >= 0.0 { 1.0 } else { -1.0 };
        let q = 0.5 * (tr + sgn * s);
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, self.det() / q) };
        if r1.abs() >= r2.abs() {
            Some((r1, r2))
        } else {
            Some((r2, r1))
        }
    }

    /// Unit eigenvector for a real eigenvalue, first component ≥ 0.
    pub fn eigenvector(&self, lambda: f64) -> Point {
        let a = self.m[0][0] - lambda;
        let b = self.m[0][1];
        let c = self.m[1][0];
        let d = self.m[1][1] - lambda;
        let v = if a.abs() + b.abs() >= c.abs() + d.abs() {
            Point::new(-b, a)
        } else {
            Point::new(-d, c)
        };
        let v = if v.norm() == 0.0 { Point::new(1.0, 0.0) } else { v.normalized() };
        if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
            -v
        } else {
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Preserving,
    Reversing,
}

impl Orientation {
    /// Sign of the second coordinate in (1 − a x² + √b y, ±√b x).
    pub fn sigma(self) -> f64 {
        match self {
            Orientation::Preserving => -1.0,
            Orientation::Reversing => 1.0,
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "preserving" | "p" | "+" => Ok(Orientation::Preserving),
            "reversing" | "r" | "-" => Ok(Orientation::Reversing),
            other => Err(Error::Config(format!("unknown orientation '{other}'"))),
        }
    }
}

/// User-supplied smooth perturbation Φ for f = (1 − a x², 0) + b·Φ(a, b, x, y).
pub trait Coupling: Send + Sync {
    fn phi(&self, a: f64, b: f64, z: Point) -> Point;
    /// Jacobian of Φ with respect to (x, y).
    fn dphi(&self, a: f64, b: f64, z: Point) -> Mat2;
    fn name(&self) -> &str {
        "custom"
    }
}

#[derive(Clone, Default)]
pub enum Perturbation {
    /// (1 − a x² + √b y, ±√b x)
    #[default]
    Standard,
    Custom(Arc<dyn Coupling>),
}

impl fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Standard => write!(f, "Standard"),
            Perturbation::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FamilyParams {
    pub a: f64,
    pub b: f64,
    pub orientation: Orientation,
    pub perturbation: Perturbation,
}

pub const B_MAX: f64 = 1e-2;

impl FamilyParams {
    pub fn new(a: f64, b: f64, orientation: Orientation) -> Self {
        FamilyParams { a, b, orientation, perturbation: Perturbation::Standard }
    }

    pub fn with_coupling(a: f64, b: f64, orientation: Orientation, c: Arc<dyn Coupling>) -> Self {
        FamilyParams { a, b, orientation, perturbation: Perturbation::Custom(c) }
    }

    pub fn with_a(&self, a: f64) -> Self {
        FamilyParams { a, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::Config("a must be finite".into()));
        }
        if !(0.0..=B_MAX).contains(&self.b) {
            return Err(Error::Config(format!("b = {} outside [0, {B_MAX}]", self.b)));
        }
        Ok(())
    }

    pub fn sqrt_b(&self) -> f64 {
        self.b.sqrt()
    }

    pub fn sigma(&self) -> f64 {
        self.orientation.sigma()
    }

    pub fn is_degenerate(&self) -> bool {
        self.b == 0.0
    }
}

pub fn apply(p: &FamilyParams, z: Point) -> Point {
    match &p.perturbation {
        Perturbation::Standard => {
            let sb = p.sqrt_b();
            Point::new(1.0 - p.a * z.x * z.x + sb * z.y, p.sigma() * sb * z.x)
        }
        Perturbation::Custom(c) => {
            let phi = c.phi(p.a, p.b, z);
            Point::new(1.0 - p.a * z.x * z.x + p.b * phi.x, p.b * phi.y)
        }
    }
}

pub fn jacobian(p: &FamilyParams, z: Point) -> Mat2 {
    match &p.perturbation {
        Perturbation::Standard => {
            let sb = p.sqrt_b();
            Mat2::new(-2.0 * p.a * z.x, sb, p.sigma() * sb, 0.0)
        }
        Perturbation::Custom(c) => {
            let d = c.dphi(p.a, p.b, z).scale(p.b);
            Mat2::new(-2.0 * p.a * z.x + d.m[0][0], d.m[0][1], d.m[1][0], d.m[1][1])
        }
    }
}

/// Derivative of the map with respect to the parameter a.
pub fn d_da(p: &FamilyParams, z: Point) -> Point {
    match &p.perturbation {
        Perturbation::Standard => Point::new(-z.x * z.x, 0.0),
        Perturbation::Custom(c) => {
            let h = 1e-6;
            let phi1 = c.phi(p.a + h, p.b, z);
            let phi0 = c.phi(p.a - h, p.b, z);
            Point::new(-z.x * z.x + p.b * (phi1.x - phi0.x) / (2.0 * h), p.b * (phi1.y - phi0.y) / (2.0 * h))
        }
    }
}

/// Second derivatives: (∂ₓDf, ∂ᵧDf).
pub fn second_derivatives(p: &FamilyParams, z: Point) -> (Mat2, Mat2) {
    match &p.perturbation {
        Perturbation::Standard => (Mat2::new(-2.0 * p.a, 0.0, 0.0, 0.0), Mat2::new(0.0, 0.0, 0.0, 0.0)),
        Perturbation::Custom(_) => {
            let h = 1e-5;
            let dx = jacobian(p, z + Point::new(h, 0.0))
                .add(&jacobian(p, z - Point::new(h, 0.0)).scale(-1.0))
                .scale(0.5 / h);
            let dy = jacobian(p, z + Point::new(0.0, h))
                .add(&jacobian(p, z - Point::new(0.0, h)).scale(-1.0))
                .scale(0.5 / h);
            (dx, dy)
        }
    }
}

/// Norm of the second derivative as a bilinear map, sup over unit (u, v).
pub fn second_derivative_norm(p: &FamilyParams, z: Point) -> f64 {
    let (dx, dy) = second_derivatives(p, z);
    let mut best: f64 = 0.0;
    let n = 64;
    for i in 0..n {
        let t = std::f64::consts::PI * i as f64 / n as f64;
        let (s, c) = t.sin_cos();
        let m = dx.scale(c).add(&dy.scale(s));
        best = best.max(m.norm());
    }
    best
}

pub fn inverse_apply(p: &FamilyParams, z: Point) -> Result<Point> {
    if p.b == 0.0 {
        return Err(Error::NotInvertible);
    }
    let sb = p.sqrt_b();
    let x = p.sigma() * z.y / sb;
    let guess = Point::new(x, (z.x - 1.0 + p.a * x * x) / sb);
    match &p.perturbation {
        Perturbation::Standard => Ok(guess),
        Perturbation::Custom(_) => {
            let mut w = guess;
            for _ in 0..50 {
                let r = apply(p, w) - z;
                if r.norm() <= 1e-15 * (1.0 + z.norm()) {
                    return Ok(w);
                }
                let inv = jacobian(p, w).inverse().ok_or(Error::NotInvertible)?;
                w = w - inv.apply(r);
                if !w.is_finite() {
                    return Err(Error::NewtonDiverged);
                }
            }
            if (apply(p, w) - z).norm() <= 1e-10 * (1.0 + z.norm()) {
                Ok(w)
            } else {
                Err(Error::NewtonDiverged)
            }
        }
    }
}

pub fn iterate(p: &FamilyParams, z: Point, n: usize) -> Point {
    let mut w = z;
    for _ in 0..n {
        w = apply(p, w);
    }
    w
}

pub fn overflowed(z: Point) -> bool {
    !(z.x.abs() <= OVERFLOW_LIMIT && z.y.abs() <= OVERFLOW_LIMIT)
}

/// Constructive constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub alpha: f64,
    pub m: usize,
    pub delta: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub theta: f64,
    pub c0: f64,
    pub kappa0: f64,
    pub beta: f64,
    pub n_cap: u64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Constants {
    pub const DEFAULT_ALPHA: f64 = 0.01;
    pub const DEFAULT_M: usize = 30;
    pub const DEFAULT_DELTA: f64 = 0.05;
    pub const DEFAULT_LAMBDA0: f64 = 0.6;

    pub fn for_params(p: &FamilyParams) -> Constants {
        Constants::build(
            p,
            Self::DEFAULT_ALPHA,
            Self::DEFAULT_M,
            Self::DEFAULT_DELTA,
            Self::DEFAULT_LAMBDA0,
        )
    }

    pub fn build(p: &FamilyParams, alpha: f64, m: usize, delta: f64, lambda0: f64) -> Constants {
        let c0 = estimate_c0(p);
        Constants::from_c0(p.b, c0, alpha, m, delta, lambda0)
    }

    pub fn from_c0(b: f64, c0: f64, alpha: f64, m: usize, delta: f64, lambda0: f64) -> Constants {
        let theta = alpha.powi(3);
        let beta = if b > 0.0 && b < 1.0 { 2.0 * c0.ln() / (1.0 / b).ln() } else { 0.0 };
        let n_cap = ((1.0 / delta).ln() / theta).floor() as u64;
        Constants {
            alpha,
            m,
            delta,
            lambda0,
            lambda: lambda0 / 2.0,
            theta,
            c0,
            kappa0: c0.powf(-10.0),
            beta,
            n_cap,
            c1: c0,
            c2: c0,
            c3: c0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.1) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 0.1)", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta = {} must lie in (0, 0.5)", self.delta)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 < std::f64::consts::LN_2) {
            return Err(Error::Config(format!("lambda0 = {} must lie in (0, log 2)", self.lambda0)));
        }
        if self.m == 0 {
            return Err(Error::Config("M must be positive".into()));
        }
        if (self.lambda - self.lambda0 / 2.0).abs() > 1e-15 {
            return Err(Error::Config("lambda must equal lambda0 / 2".into()));
        }
        Ok(())
    }

    pub fn kappa_half(&self) -> f64 {
        self.kappa0.sqrt()
    }

    pub fn kappa_third(&self) -> f64 {
        self.kappa0.cbrt()
    }

    pub fn kappa_quarter(&self) -> f64 {
        self.kappa0.powf(0.25)
    }

    /// Horizon below which no exclusion can occur on [a* − ε, a*]; grows as ε → 0, and is 0 once
    /// ε ≥ κ₀/2.
    pub fn n0(&self, eps: f64) -> f64 {
        ((self.kappa0 / (2.0 * eps)).ln() / (2.0 * self.c0.ln())).max(0.0)
    }
}

/// Largest partial derivative of order 1 to 4 in (a, x, y), sampled over [-2, 2]².
pub fn estimate_c0(p: &FamilyParams) -> f64 {
    match &p.perturbation {
        Perturbation::Standard => {
            // order 1: |2ax|, √b, x²; order 2: 2a, 2|x|; order 3: 2
            let xmax = 2.0f64;
            let first = (2.0 * p.a.abs() * xmax).max(xmax * xmax).max(p.sqrt_b());
            let second = (2.0 * p.a.abs()).max(2.0 * xmax);
            first.max(second).max(2.0).max(jacobian(p, Point::new(2.0, 0.0)).norm())
        }
        Perturbation::Custom(_) => {
            let mut best: f64 = 2.0;
            let n = 41;
            for i in 0..n {
                for j in 0..n {
                    let z = Point::new(-2.0 + 4.0 * i as f64 / (n - 1) as f64, -2.0 + 4.0 * j as f64 / (n - 1) as f64);
                    let jm = jacobian(p, z);
                    best = best.max(jm.m.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
                    best = best.max(jm.norm());
                    let da = d_da(p, z);
                    best = best.max(da.x.abs()).max(da.y.abs());
                    let (dx, dy) = second_derivatives(p, z);
                    for v in dx.m.iter().chain(dy.m.iter()).flatten() {
                        best = best.max(v.abs());
                    }
                }
            }
            best
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    InR0,
    InD1,
    Escaping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExitRecord {
    pub first_exit: Option<usize>,
    pub first_d1: Option<usize>,
    pub first_d0: Option<usize>,
}

impl ExitRecord {
    pub fn is_null(&self) -> bool {
        self.first_exit.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub points: Vec<Point>,
    pub exit: ExitRecord,
}

/// The modified family: the map itself on R₀, blended into an expanding affine map left of Wˢ_loc(Q).
#[derive(Debug, Clone)]
pub struct ModifiedFamily {
    pub params: FamilyParams,
    pub region: Arc<RegionR0>,
    pub collar: f64,
}

pub const MODIFIED_COLLAR: f64 = 0.1;

fn smoothstep5(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        let dv = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        (v, dv)
    }
}

impl ModifiedFamily {
    pub fn new(params: &FamilyParams, region: Arc<RegionR0>) -> Result<Self> {
        if (region.a - params.a).abs() > 0.0 || (region.b - params.b).abs() > 0.0 || region.orientation != params.orientation {
            return Err(Error::ModifiedFamilyUnavailable);
        }
        Ok(ModifiedFamily { params: params.clone(), region, collar: MODIFIED_COLLAR })
    }

    fn affine(&self, z: Point) -> Point {
        Point::new(3.0 * z.x - z.x.signum(), self.params.b * z.y)
    }

    fn blend_weight(&self, z: Point) -> (f64, Point) {
        let xs = self.region.ws_loc_x(z.y);
        let s = (xs - z.x) / self.collar;
        let (v, dv) = smoothstep5(s);
        let ds = Point::new(-1.0 / self.collar, self.region.ws_loc_dxdy(z.y) / self.collar);
        (v, ds * dv)
    }

    pub fn tag(&self, z: Point) -> RegionTag {
        self.region.tag(z)
    }

    pub fn apply(&self, z: Point) -> (Point, RegionTag) {
        let tag = self.region.tag(z);
        if tag == RegionTag::InR0 {
            return (apply(&self.params, z), tag);
        }
        let (phi, _) = self.blend_weight(z);
        let fz = apply(&self.params, z);
        if phi == 0.0 {
            return (fz, tag);
        }
        let az = self.affine(z);
        (fz * (1.0 - phi) + az * phi, tag)
    }

    pub fn jacobian(&self, z: Point) -> Mat2 {
        let df = jacobian(&self.params, z);
        if self.region.tag(z) == RegionTag::InR0 {
            return df;
        }
        let (phi, grad) = self.blend_weight(z);
        if phi == 0.0 && grad.norm() == 0.0 {
            return df;
        }
        let da = Mat2::diag(3.0, self.params.b);
        let diff = self.affine(z) - apply(&self.params, z);
        let outer = Mat2::new(diff.x * grad.x, diff.x * grad.y, diff.y * grad.x, diff.y * grad.y);
        df.scale(1.0 - phi).add(&da.scale(phi)).add(&outer)
    }
}

/// Orbit with exit bookkeeping against R₀.
pub fn orbit(p: &FamilyParams, z: Point, n: usize, region: &RegionR0, modified: Option<&ModifiedFamily>) -> Result<OrbitRecord> {
    let mut pts = Vec::with_capacity(n + 1);
    let mut exit = ExitRecord::default();
    let mut w = z;
    for step in 0..=n {
        if overflowed(w) {
            return Err(Error::NumericOverflow { step });
        }
        pts.push(w);
        match region.tag(w) {
            RegionTag::InR0 => {}
            t => {
                if exit.first_exit.is_none() {
                    exit.first_exit = Some(step);
                }
                if t == RegionTag::InD1 && exit.first_d1.is_none() {
                    exit.first_d1 = Some(step);
                }
                if region.in_d0(w) && exit.first_d0.is_none() {
                    exit.first_d0 = Some(step);
                }
            }
        }
        if step == n {
            break;
        }
        w = match modified {
            Some(m) => m.apply(w).0,
            None => apply(p, w),
        };
    }
    Ok(OrbitRecord { points: pts, exit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(a: f64, b: f64, o: Orientation) -> FamilyParams {
        FamilyParams::new(a, b, o)
    }

    #[test]
    fn degenerate_images() {
        let p = fam(2.0, 0.0, Orientation::Preserving);
        assert_eq!(apply(&p, Point::new(0.0, 0.0)), Point::new(1.0, 0.0));
        assert_eq!(apply(&p, Point::new(1.0, 0.0)), Point::new(-1.0, 0.0));
    }

    #[test]
    fn reversing_coupling_arithmetic() {
        let p = fam(2.0, 0.01, Orientation::Reversing);
        let w = apply(&p, Point::new(0.0, 1.0));
        // 1 - 0 + 0.1·1, 0.1·0
        assert!((w.x - 1.1).abs() < 1e-15 && w.y == 0.0);
    }

    #[test]
    fn jacobian_example() {
        let p = fam(2.0, 0.01, Orientation::Reversing);
        let j = jacobian(&p, Point::new(0.5, 0.0));
        assert!((j.m[0][0] + 2.0).abs() < 1e-15);
        assert!((j.m[0][1] - 0.1).abs() < 1e-15);
        assert!((j.m[1][0] - 0.1).abs() < 1e-15);
        assert_eq!(j.m[1][1], 0.0);
        assert!((j.det() + 0.01).abs() < 1e-15);
    }

    #[test]
    fn degenerate_jacobian_singular() {
        let p = fam(2.0, 0.0, Orientation::Reversing);
        assert_eq!(jacobian(&p, Point::new(0.3, -0.7)).det(), 0.0);
        assert_eq!(inverse_apply(&p, Point::new(0.0, 0.0)), Err(Error::NotInvertible));
    }

    #[test]
    fn singular_values_closed_form() {
        let m = Mat2::new(1.0, 1.0, 0.0, 1.0);
        let (s1, s2) = m.singular_values();
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((s1 - g).abs() < 1e-14);
        assert!((s2 - 1.0 / g).abs() < 1e-14);
    }

    #[test]
    fn eigen_of_diagonal() {
        let m = Mat2::diag(4.0, -0.25);
        let (l1, l2) = m.real_eigenvalues().unwrap();
        assert_eq!((l1, l2), (4.0, -0.25));
        let v = m.eigenvector(l1);
        assert!((v.x - 1.0).abs() < 1e-15 && v.y.abs() < 1e-15);
    }

    #[test]
    fn constants_relations() {
        let p = fam(2.0, 1e-4, Orientation::Preserving);
        let c = Constants::for_params(&p);
        assert_eq!(c.theta, c.alpha.powi(3));
        assert_eq!(c.kappa0, c.c0.powf(-10.0));
        assert_eq!(c.lambda, c.lambda0 / 2.0);
        assert!((c.beta - 2.0 * c.c0.ln() / 1e4f64.ln()).abs() < 1e-15);
        assert_eq!(c.n_cap, ((1.0f64 / 0.05).ln() / 1e-6).floor() as u64);
        c.validate().unwrap();
    }

    #[test]
    fn constants_reject_bad_lambda0() {
        let mut c = Constants::for_params(&fam(2.0, 1e-4, Orientation::Preserving));
        c.lambda0 = 0.7;
        c.lambda = 0.35;
        assert!(c.validate().is_err());
    }
}
