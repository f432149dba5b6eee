//! Escape statistics: grid survival, stopping times on unstable segments, close returns and Ω_k ratios,
//! projectivization bounds and transitivity witnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critical::{piece_height, CriticalRegion, Parametrized};
use crate::error::{Error, Result};
use crate::linalg::linear_fit;
use crate::manifolds::{find_fixed_points, grow_unstable_manifold, ws_plus_graph, Curve, RegionR0};
use crate::map_core::{apply, jacobian, second_derivative_norm, Constants, FamilyParams, Point};

/// First time the orbit of z leaves R₀, or None if it stays up to T.
pub fn exit_time(p: &FamilyParams, r0: &RegionR0, z: Point, t_max: usize) -> Option<usize> {
    let mut w = z;
    for t in 0..=t_max {
        if !r0.contains(w) {
            return Some(t);
        }
        w = apply(p, w);
    }
    None
}

/// Fraction of an n×n grid of R₀ still inside R₀ at each t = 0…T.
pub fn grid_escape(p: &FamilyParams, r0: &RegionR0, n: usize, t_max: usize) -> Vec<f64> {
    survival_curve(p, r0, &r0.grid(n), t_max)
}

pub fn survival_curve(p: &FamilyParams, r0: &RegionR0, seeds: &[Point], t_max: usize) -> Vec<f64> {
    let times: Vec<Option<usize>> = seeds.par_iter().map(|z| exit_time(p, r0, *z, t_max)).collect();
    let mut exits = vec![0usize; t_max + 2];
    for t in times.iter().flatten() {
        exits[*t] += 1;
    }
    let total = seeds.len().max(1) as f64;
    let mut alive = seeds.len();
    (0..=t_max)
        .map(|t| {
            alive -= exits[t];
            alive as f64 / total
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopKind {
    /// The image is outside I(δ) and stretches across a component of I(2δ)\I(δ).
    Grown,
    /// The image left R₀.
    Escaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingElement {
    /// Parameter interval on ω₀.
    pub s: (f64, f64),
    pub stop: usize,
    pub kind: StopKind,
    /// |log ‖Df^S(ξ)t‖ − log ‖Df^S(η)t‖| between the ends.
    pub log_distortion: f64,
    pub image_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// n-range used by the fit.
    pub range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingPartition {
    pub host: Curve,
    pub depth: usize,
    pub elements: Vec<StoppingElement>,
    /// |{S > n}| as a fraction of ω₀, n = 0…depth.
    pub tail: Vec<f64>,
    pub remaining: f64,
    pub fit: Option<TailFit>,
    /// Smallest C on a log grid with log-distortion ≤ (C/δ)·d^{Cα} on every grown element.
    pub distortion_constant: Option<f64>,
}

const STOP_SAMPLES: usize = 17;
const MIN_PIECE: f64 = 1e-15;
const MAX_PIECES: usize = 2_000_000;

fn host_point(host: &Parametrized, s: f64) -> Point {
    host.eval(s.clamp(0.0, 1.0) * host.length()).0
}

fn image(p: &FamilyParams, host: &Parametrized, s: f64, n: usize) -> Point {
    let mut z = host_point(host, s);
    for _ in 0..n {
        z = apply(p, z);
    }
    z
}

fn image_with_tangent(p: &FamilyParams, host: &Parametrized, s: f64, n: usize) -> (Point, f64) {
    let h = 1e-9;
    let t = (host_point(host, (s + h).min(1.0)) - host_point(host, (s - h).max(0.0))).normalized();
    let mut z = host_point(host, s);
    let mut v = t;
    let mut log_norm = 0.0;
    for _ in 0..n {
        v = jacobian(p, z).apply(v);
        let nv = v.norm();
        log_norm += nv.ln();
        v = v * (1.0 / nv);
        z = apply(p, z);
    }
    (z, log_norm)
}

/// Zone of x relative to the critical strips: 0 inside I(δ), 1 in I(2δ)\I(δ), 2 outside.
fn zone(x: f64, delta: f64) -> u8 {
    if x.abs() < delta {
        0
    } else if x.abs() <= 2.0 * delta {
        1
    } else {
        2
    }
}

/// Recursive cutting of ω₀ at the lines |x| = δ, 2δ and at exits from R₀, stopping pieces whose image
/// crosses a component of I(2δ)\I(δ), or leaves R₀.
pub fn segment_stopping_times(p: &FamilyParams, r0: &RegionR0, host: &Curve, depth: usize) -> Result<StoppingPartition> {
    let part = stopping_partition(p, r0, host, depth);
    if part.remaining > 0.5 {
        return Err(Error::DepthExhausted { remaining: part.remaining });
    }
    Ok(part)
}

/// As `segment_stopping_times`, but returns the partial partition however much mass is unresolved.
pub fn stopping_partition(p: &FamilyParams, r0: &RegionR0, host: &Curve, depth: usize) -> StoppingPartition {
    let c = Constants::for_params(p);
    let delta = c.delta;
    let curve = host;
    let host = &Parametrized::new(curve);
    let mut active: Vec<(f64, f64, usize)> = vec![(0.0, 1.0, 0)];
    let mut elements = Vec::new();
    let mut remaining = 0.0;
    let bisect = |s0: f64, s1: f64, n: usize, test: &dyn Fn(Point) -> bool| -> f64 {
        let t0 = test(image(p, host, s0, n));
        let (mut a, mut b) = (s0, s1);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if test(image(p, host, m, n)) == t0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    };
    while let Some((s0, s1, n)) = active.pop() {
        if active.len() + elements.len() > MAX_PIECES {
            remaining += s1 - s0;
            continue;
        }
        if s1 - s0 < MIN_PIECE {
            remaining += s1 - s0;
            continue;
        }
        let ss: Vec<f64> = (0..STOP_SAMPLES).map(|i| s0 + (s1 - s0) * i as f64 / (STOP_SAMPLES - 1) as f64).collect();
        let zs: Vec<Point> = ss.iter().map(|s| image(p, host, *s, n)).collect();
        let inside: Vec<bool> = zs.iter().map(|z| r0.contains(*z)).collect();
        if inside.iter().all(|v| !v) {
            elements.push(finish(p, host, s0, s1, n, StopKind::Escaped));
            continue;
        }
        // a cut that lands on an end means the transition sits at that end within resolution
        let proper = |cut: f64| cut - s0 > MIN_PIECE && s1 - cut > MIN_PIECE;
        if let Some(i) = (0..STOP_SAMPLES - 1).find(|i| inside[*i] != inside[i + 1]) {
            let cut = bisect(ss[i], ss[i + 1], n, &|z| r0.contains(z));
            if proper(cut) {
                active.push((s0, cut, n));
                active.push((cut, s1, n));
                continue;
            }
        }
        // keep images resolved so folds between samples are not missed
        let chord = zs.windows(2).map(|w| w[0].dist(w[1])).fold(0.0, f64::max);
        if chord > 0.25 * delta {
            let m = 0.5 * (s0 + s1);
            active.push((s0, m, n));
            active.push((m, s1, n));
            continue;
        }
        let zones: Vec<u8> = zs.iter().map(|z| zone(z.x, delta)).collect();
        if let Some(i) = (0..STOP_SAMPLES - 1).find(|i| zones[*i] != zones[i + 1]) {
            let z0 = zones[i];
            let cut = bisect(ss[i], ss[i + 1], n, &|z| zone(z.x, delta) == z0);
            if proper(cut) {
                active.push((s0, cut, n));
                active.push((cut, s1, n));
                continue;
            }
        }
        let zone_mid = zones[STOP_SAMPLES / 2];
        let za = image(p, host, s0, n);
        let zb = image(p, host, s1, n);
        let across = zone_mid == 1 && za.x * zb.x > 0.0 && {
            let (lo, hi) = (za.x.abs().min(zb.x.abs()), za.x.abs().max(zb.x.abs()));
            lo <= delta * (1.0 + 1e-9) && hi >= 2.0 * delta * (1.0 - 1e-9)
        };
        if across {
            elements.push(finish(p, host, s0, s1, n, StopKind::Grown));
        } else if n >= depth {
            remaining += s1 - s0;
        } else {
            active.push((s0, s1, n + 1));
        }
    }
    elements.sort_by(|a, b| a.s.0.total_cmp(&b.s.0));
    let mut stopped_by = vec![0.0; depth + 1];
    for e in &elements {
        stopped_by[e.stop.min(depth)] += e.s.1 - e.s.0;
    }
    let mut tail = Vec::with_capacity(depth + 1);
    let mut mass = 1.0;
    for sb in stopped_by {
        mass -= sb;
        tail.push(mass.max(0.0));
    }
    let fit = fit_tail(&tail);
    let distortion_constant = fit_distortion(&elements, delta, c.alpha);
    StoppingPartition { host: curve.clone(), depth, elements, tail, remaining, fit, distortion_constant }
}

/// Seed across the right component of I(2δ)\I(δ): the upper unstable side of R₀ over δ ≤ x ≤ 2δ,
/// moved inside by `inset` so membership tests do not flicker on the boundary.
pub fn annulus_seed(r0: &RegionR0, delta: f64, inset: f64) -> Option<Curve> {
    let verts: Vec<Point> = r0
        .arc_y
        .iter()
        .zip(&r0.arc_x)
        .filter(|(y, x)| **y > 0.0 && **x >= delta && **x <= 2.0 * delta)
        .map(|(y, x)| Point::new(*x, *y - inset))
        .collect();
    (verts.len() >= 3).then(|| Curve::new(verts))
}

fn finish(p: &FamilyParams, host: &Parametrized, s0: f64, s1: f64, n: usize, kind: StopKind) -> StoppingElement {
    let (za, la) = image_with_tangent(p, host, s0, n);
    let (zb, lb) = image_with_tangent(p, host, s1, n);
    StoppingElement { s: (s0, s1), stop: n, kind, log_distortion: (la - lb).abs(), image_distance: za.dist(zb) }
}

/// Log-linear fit of the resolved part of a tail: from the first n with mass < 1 to the last with
/// mass > 1e-12.
pub fn fit_tail(tail: &[f64]) -> Option<TailFit> {
    let start = tail.iter().position(|m| *m < 1.0 - 1e-12)?;
    let end = tail.iter().rposition(|m| *m > 1e-12)?;
    if end < start + 2 {
        return None;
    }
    let xs: Vec<f64> = (start..=end).map(|n| n as f64).collect();
    let ys: Vec<f64> = (start..=end).map(|n| tail[n].ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Some(TailFit { slope, intercept, r2, range: (start, end) })
}

fn fit_distortion(elements: &[StoppingElement], delta: f64, alpha: f64) -> Option<f64> {
    let grown: Vec<&StoppingElement> = elements.iter().filter(|e| e.kind == StopKind::Grown && e.image_distance > 0.0).collect();
    (0..=120).map(|i| 10f64.powf(i as f64 / 40.0)).find(|c| {
        grown.iter().all(|e| e.log_distortion <= c / delta * e.image_distance.powf(c * alpha))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub samples: usize,
    pub survivors: usize,
    pub proportion: f64,
    pub t_max: usize,
}

/// Fraction of evenly spaced points of γ that stay in R₀ for T iterations.
pub fn leaf_intersection_proportion(p: &FamilyParams, r0: &RegionR0, gamma: &Curve, t_max: usize, samples: usize) -> ProportionEstimate {
    let pts: Vec<Point> = (0..samples).map(|i| gamma.point_at_fraction((i as f64 + 0.5) / samples as f64)).collect();
    let survivors = pts.par_iter().filter(|z| exit_time(p, r0, **z, t_max).is_none()).count();
    ProportionEstimate { samples, survivors, proportion: survivors as f64 / samples.max(1) as f64, t_max }
}

/// Preimages of the repelling fixed point 1/2 of x ↦ 1 − 2x² up to the given depth, sorted, and
/// the largest gap they leave in [−1, 1].
pub fn quadratic_preimages(depth: usize) -> (Vec<f64>, f64) {
    let mut level = vec![0.5f64];
    let mut all = vec![0.5f64];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(2 * level.len());
        for y in &level {
            let r = (1.0 - y) / 2.0;
            if r >= 0.0 {
                let s = r.sqrt();
                next.push(s);
                next.push(-s);
            }
        }
        all.extend_from_slice(&next);
        level = next;
    }
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut gap: f64 = all[0] + 1.0;
    for w in all.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap = gap.max(1.0 - all[all.len() - 1]);
    (all, gap)
}

/// Close-return box at level k around each critical pair of the deepest available region: points of
/// the component within δ^{3k/4} (capped at δ) of its critical points in x. Beyond the resolved depth
/// the deepest region stands in for 𝒜⁽ᵏ⁾, which can only over-detect.
pub struct CloseReturnBoxes<'a> {
    pub p: &'a FamilyParams,
    pub r0: &'a RegionR0,
    pub regions: &'a [CriticalRegion],
    pub delta: f64,
    pub tol: f64,
}

impl<'a> CloseReturnBoxes<'a> {
    pub fn k_max(&self) -> usize {
        self.regions.len() - 1
    }

    pub fn half_width(&self, k: usize) -> f64 {
        self.delta.powf(0.75 * k as f64).min(self.delta)
    }

    pub fn contains(&self, z: Point, k: usize) -> bool {
        if z.x.abs() >= self.delta {
            return false;
        }
        let level = &self.regions[k.min(self.k_max())];
        let w = self.half_width(k);
        level
            .components
            .iter()
            .any(|c| (z.x - c.critical[0].x).abs() <= w && c.contains(self.p, self.r0, z, self.tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloseReturnLog {
    pub seed: Point,
    pub k0: usize,
    /// Close-return times ν₁, ν₂, …, each counted from the previous return.
    pub times: Vec<usize>,
    pub exit_time: Option<usize>,
    /// Some test used a level beyond the resolved region depth.
    pub beyond_resolved: bool,
}

impl CloseReturnLog {
    /// ν_{l+1} ≥ 4ν_l and ν₁ ≥ 4k₀.
    pub fn obeys_laws(&self) -> bool {
        self.times.first().map_or(true, |v| *v >= 4 * self.k0) && self.times.windows(2).all(|w| w[1] >= 4 * w[0])
    }
}

pub fn close_returns(boxes: &CloseReturnBoxes, seed: Point, t_max: usize, k0: usize) -> CloseReturnLog {
    let p = boxes.p;
    let mut log = CloseReturnLog { seed, k0, times: Vec::new(), exit_time: None, beyond_resolved: false };
    let mut z = seed;
    let mut since = 0usize;
    for t in 1..=t_max {
        z = apply(p, z);
        since += 1;
        if !boxes.r0.contains(z) {
            log.exit_time = Some(t);
            break;
        }
        if z.x.abs() < boxes.delta {
            if since > boxes.k_max() {
                log.beyond_resolved = true;
            }
            if boxes.contains(z, since) {
                log.times.push(since);
                since = 0;
            }
        }
    }
    log
}

/// Uniform point of 𝒜⁽ᵏ⁾: a component of the level, x within the box, y between its boundaries.
pub fn sample_box(boxes: &CloseReturnBoxes, k: usize, rng: &mut ChaCha8Rng) -> Point {
    let level = &boxes.regions[k.min(boxes.k_max())];
    let c = &level.components[rng.gen_range(0..level.components.len())];
    let w = boxes.half_width(k);
    let lo = (c.critical[0].x - w).max(c.x_range.0);
    let hi = (c.critical[0].x + w).min(c.x_range.1);
    let x = rng.gen_range(lo..=hi);
    let h0 = piece_height(boxes.p, boxes.r0, &c.boundaries[0], x);
    let h1 = piece_height(boxes.p, boxes.r0, &c.boundaries[1], x);
    let y = if h0 == h1 { h0 } else { rng.gen_range(h0.min(h1)..=h0.max(h1)) };
    Point::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaEstimate {
    pub k: usize,
    /// Seeds with at least k − 1 close returns, and among them those with at least k.
    pub pool: usize,
    pub hits: usize,
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Fewer than 30 hits: only the upper bound is meaningful.
    pub starved: bool,
}

/// Wilson score interval at 95%.
pub fn wilson(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959964;
    let nf = n as f64;
    let ph = hits as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (ph + z * z / (2.0 * nf)) / den;
    let half = z * (ph * (1.0 - ph) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport {
    pub k0: usize,
    pub t_max: usize,
    pub estimates: Vec<OmegaEstimate>,
    pub logs_checked: usize,
    pub law_violations: usize,
    /// max over seed pairs in a box of |det Df^ν(ξ)| / |det Df^ν(η)|.
    pub det_ratio: f64,
}

/// |Ω_k|/|Ω_{k−1}| for k = 1…k_levels by Monte Carlo; survivors of each level are re-seeded by small
/// jitter to form the next pool.
pub fn omega_ratio(boxes: &CloseReturnBoxes, k0: usize, samples: usize, k_levels: usize, t_max: usize, seed: u64) -> OmegaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Point> = (0..samples).map(|_| sample_box(boxes, k0, &mut rng)).collect();
    let mut estimates = Vec::new();
    let mut logs_checked = 0;
    let mut law_violations = 0;
    for k in 1..=k_levels {
        let logs: Vec<CloseReturnLog> = pool.par_iter().map(|z| close_returns(boxes, *z, t_max, k0)).collect();
        logs_checked += logs.len();
        law_violations += logs.iter().filter(|l| !l.obeys_laws()).count();
        let survivors: Vec<Point> = logs.iter().filter(|l| l.times.len() >= k).map(|l| l.seed).collect();
        let hits = survivors.len();
        let n = logs.iter().filter(|l| l.times.len() + 1 >= k).count();
        let (ci_lo, ci_hi) = wilson(hits, n);
        estimates.push(OmegaEstimate { k, pool: n, hits, ratio: if n > 0 { hits as f64 / n as f64 } else { 0.0 }, ci_lo, ci_hi, starved: hits < 30 });
        if survivors.is_empty() {
            break;
        }
        let jitter = 1e-3 * boxes.half_width(k0);
        pool = (0..samples)
            .map(|_| {
                let s = survivors[rng.gen_range(0..survivors.len())];
                Point::new(s.x + jitter * (rng.gen::<f64>() - 0.5), s.y)
            })
            .collect();
    }
    // the standard coupling has constant Jacobian determinant, so the ratio is measured, not assumed
    let det_ratio = {
        let a = sample_box(boxes, k0, &mut rng);
        let b = sample_box(boxes, k0, &mut rng);
        let det = |mut z: Point| {
            let mut d = 1.0;
            for _ in 0..k0.max(1) {
                d *= jacobian(boxes.p, z).det().abs() / boxes.p.b.max(f64::MIN_POSITIVE);
                z = apply(boxes.p, z);
            }
            d
        };
        let (da, db) = (det(a), det(b));
        (da / db).max(db / da)
    };
    OmegaReport { k0, t_max, estimates, logs_checked, law_violations, det_ratio }
}

/// Angle θ of Df(ξ)v for v = (cos φ, sin φ), continuous in φ.
fn projected_angle(p: &FamilyParams, xi: Point, phi: f64) -> f64 {
    let w = jacobian(p, xi).apply(Point::new(phi.cos(), phi.sin()));
    w.y.atan2(w.x)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    while d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    while d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectivizationSample {
    pub xi: Point,
    pub phi: f64,
    /// |∂_v f_*| by finite differences, and its bound 2|det Df| / ‖Df v‖².
    pub dv: f64,
    pub dv_bound: f64,
    /// |∂_ξ f_*| by finite differences, and its bound ‖D²f‖‖v‖ / ‖Df v‖.
    pub dxi: f64,
    pub dxi_bound: f64,
}

pub fn projectivization_sample(p: &FamilyParams, xi: Point, phi: f64) -> ProjectivizationSample {
    let h = 1e-6;
    let dv = angle_diff(projected_angle(p, xi, phi + h), projected_angle(p, xi, phi - h)).abs() / (2.0 * h);
    let gx = angle_diff(projected_angle(p, xi + Point::new(h, 0.0), phi), projected_angle(p, xi - Point::new(h, 0.0), phi)) / (2.0 * h);
    let gy = angle_diff(projected_angle(p, xi + Point::new(0.0, h), phi), projected_angle(p, xi - Point::new(0.0, h), phi)) / (2.0 * h);
    let j = jacobian(p, xi);
    let w = j.apply(Point::new(phi.cos(), phi.sin())).norm();
    ProjectivizationSample {
        xi,
        phi,
        dv,
        dv_bound: 2.0 * j.det().abs() / (w * w),
        dxi: gx.hypot(gy),
        dxi_bound: second_derivative_norm(p, xi) / w,
    }
}

/// Random (ξ, v) with ξ ∈ [−2, 2]² and v at a uniform angle.
pub fn projectivization_check(p: &FamilyParams, n: usize, seed: u64) -> Vec<ProjectivizationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let xi = Point::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let phi = rng.gen_range(0.0..std::f64::consts::PI);
            projectivization_sample(p, xi, phi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// max angle(u(ξ), u(η)) / |ξ − η| over sampled pairs across the two sides.
    pub ratio: f64,
    /// C₂C₃^{3ν}.
    pub bound: f64,
    pub holds: bool,
}

/// Angle variation of the unit tangents between two unstable sides of a rectangle.
pub fn angle_propagation_check(a: &Curve, b: &Curve, nu: usize, c: &Constants) -> LipschitzReport {
    let mut ratio: f64 = 0.0;
    for (za, ta) in a.vertices.iter().zip(&a.tangents) {
        for (zb, tb) in b.vertices.iter().zip(&b.tangents) {
            let d = za.dist(*zb);
            if d > 0.0 {
                let ang = ta.cross(*tb).abs().atan2(ta.dot(*tb).abs());
                ratio = ratio.max(ang / d);
            }
        }
    }
    let bound = c.c2 * c.c3.powi(3 * nu as i32);
    LipschitzReport { ratio, bound, holds: ratio <= bound }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicPoint {
    pub point: Point,
    /// Angle between Wᵘ(Q) and Wˢ₊ at the crossing.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitivityReport {
    pub applicable: bool,
    pub transverse: Vec<HomoclinicPoint>,
    /// Smallest |x − x_s(y)| at a fold tip of Wᵘ(Q) touching Wˢ₊ without crossing (tangency residual).
    pub tangency_residual: Option<f64>,
}

pub const MIN_CROSSING_ANGLE: f64 = 1e-6;

/// Crossings of Wᵘ(Q) with the stable branch Wˢ₊ = f⁻¹Wˢ_loc(Q): each one is a homoclinic point of Q.
pub fn transitivity_witness(p: &FamilyParams, arc_budget: f64) -> Result<TransitivityReport> {
    if p.is_degenerate() {
        return Ok(TransitivityReport { applicable: false, transverse: Vec::new(), tangency_residual: None });
    }
    let (_, qs) = find_fixed_points(p)?;
    let ws = ws_plus_graph(p, &qs)?;
    let wu = grow_unstable_manifold(p, &qs, arc_budget)?;
    let h = 2.5 * p.sqrt_b();
    let mut transverse = Vec::new();
    let mut residual: Option<f64> = None;
    for br in [&wu.plus, &wu.minus] {
        let v = &br.vertices;
        let g: Vec<Option<f64>> = v.iter().map(|z| (z.y.abs() < h && (z.x - 1.0).abs() < 0.3).then(|| z.x - ws.x_at(z.y))).collect();
        for i in 0..v.len().saturating_sub(1) {
            let (Some(g0), Some(g1)) = (g[i], g[i + 1]) else { continue };
            if g0 == 0.0 || g0 * g1 < 0.0 {
                let t = g0 / (g0 - g1);
                let z = v[i] + (v[i + 1] - v[i]) * t;
                let tu = (v[i + 1] - v[i]).normalized();
                let s = Point::new(ws.dxdy(z.y), 1.0).normalized();
                let angle = tu.cross(s).abs().asin();
                if angle >= MIN_CROSSING_ANGLE {
                    transverse.push(HomoclinicPoint { point: z, angle });
                }
            }
            if i > 0 {
                if let Some(gm) = g[i - 1] {
                    // local extremum of g that does not change sign: a fold near Wˢ₊
                    if (g0 - gm) * (g1 - g0) < 0.0 && gm * g0 > 0.0 && g0 * g1 > 0.0 {
                        residual = Some(residual.map_or(g0.abs(), |r: f64| r.min(g0.abs())));
                    }
                }
            }
        }
    }
    Ok(TransitivityReport { applicable: true, transverse, tangency_residual: residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(30, 100);
        assert!(lo < 0.3 && hi > 0.3);
        assert_eq!(wilson(0, 0), (0.0, 1.0));
    }

    #[test]
    fn preimages_fill_the_interval() {
        let (_, g4) = quadratic_preimages(4);
        let (_, g10) = quadratic_preimages(10);
        assert!(g10 < g4);
        assert!(g10 < 0.01);
    }

    #[test]
    fn tail_fit_recovers_rate() {
        let tail: Vec<f64> = (0..20).map(|n| (-0.3 * n as f64).exp() * 0.5).collect();
        let f = fit_tail(&tail).unwrap();
        assert!((f.slope + 0.3).abs() < 1e-12 && f.r2 > 0.999);
    }

    #[test]
    fn parallel_sides_have_zero_ratio() {
        let a = Curve::new((0..10).map(|i| Point::new(i as f64 * 0.1, 0.0)).collect());
        let b = Curve::new((0..10).map(|i| Point::new(i as f64 * 0.1, 0.01)).collect());
        let c = Constants::from_c0(1e-4, 8.0, 0.01, 30, 0.05, 0.6);
        let r = angle_propagation_check(&a, &b, 1, &c);
        assert_eq!(r.ratio, 0.0);
        assert!(r.holds);
    }
}
