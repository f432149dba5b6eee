//! First-bifurcation parameters, deformations of critical approximations, critical parameters,
//! the exclusion diagnostic and the density sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binding::{check_g_condition, decompose_orbit, DecomposeOptions};
use crate::critical::{find_critical_approx, CriticalApprox};
use crate::error::{Error, Result};
use crate::escape::grid_escape;
use crate::linalg::wi_sequence;
use crate::manifolds::{
    build_r0, find_fixed_points, grow_unstable_manifold, refine_extremum, ws_plus_graph, ws_plus_x, Curve, RegionR0, SaddleLabel,
};
use crate::map_core::{apply, inverse_apply, iterate, jacobian, overflowed, Constants, FamilyParams, Orientation, Point};

pub const A_SEARCH: (f64, f64) = (1.8, 2.2);
pub const A_STAR_TOLERANCE: f64 = 1e-10;
pub const A_STAR_STAR_TOLERANCE: f64 = 1e-6;
/// Arc length grown on each unstable manifold when looking for its first folds.
pub const FOLD_ARC_BUDGET: f64 = 3.0;
/// Fundamental-domain samples and iterations for the box-exit flag of Wᵘ(P).
pub const BOX_SAMPLES: usize = 20_000;
pub const BOX_ITERATIONS: usize = 4000;

/// Tip of a first-generation fold near x = 1, with its signed distance past Wˢ₊ (positive: crossing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldTip {
    pub saddle: SaddleLabel,
    pub point: Point,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldGaps {
    /// The fold tip with x < 1: the internal tangency.
    pub inner: Option<FoldTip>,
    pub outer: Option<FoldTip>,
}

/// Fold tips of Wᵘ(P) and Wᵘ(Q) in the window x > 0.9, |y| ≤ 2√b, measured against Wˢ₊ = f⁻¹Wˢ_loc(Q).
pub fn fold_gaps(p: &FamilyParams) -> Result<FoldGaps> {
    let (ps, qs) = find_fixed_points(p)?;
    let sb = p.sqrt_b();
    let q = qs;
    let gap_of = |z: Point| ws_plus_x(p, &q, z.y).map_or(f64::NEG_INFINITY, |xs| z.x - xs);
    let mut out = FoldGaps { inner: None, outer: None };
    for s in [ps, qs] {
        let wu = grow_unstable_manifold(p, &s, FOLD_ARC_BUDGET)?;
        for br in [&wu.plus, &wu.minus] {
            let v = &br.vertices;
            let powers = vec![br.map_power; v.len()];
            for i in 1..v.len().saturating_sub(1) {
                let z = v[i];
                if !(z.x > 0.9 && z.y.abs() <= 2.0 * sb && z.x >= v[i - 1].x && z.x >= v[i + 1].x) {
                    continue;
                }
                let (tip, gap) = refine_extremum(p, v, &br.pre, &powers, i, gap_of);
                if !gap.is_finite() {
                    continue;
                }
                let t = FoldTip { saddle: s.label, point: tip, gap };
                // the tangency that matters in each class is the one closest to failing to cross
                let slot = if tip.x < 1.0 { &mut out.inner } else { &mut out.outer };
                if slot.map_or(true, |o| gap < o.gap) {
                    *slot = Some(t);
                }
            }
        }
    }
    Ok(out)
}

/// Wᵘ–Wˢ₊ intersection count near the inner fold: 2 when the fold crosses, 0 when it misses.
/// For b = 0 the fold degenerates to the critical value 1 − a against the fixed point.
pub fn inner_fold_indicator(p: &FamilyParams) -> Result<(usize, f64)> {
    if p.is_degenerate() {
        let fixed = (-1.0 - (1.0 + 4.0 * p.a).sqrt()) / (2.0 * p.a);
        let gap = fixed - (1.0 - p.a);
        return Ok((if gap > 0.0 { 2 } else { 0 }, gap));
    }
    let g = fold_gaps(p)?;
    let gap = g.inner.map_or(f64::NEG_INFINITY, |t| t.gap);
    Ok((if gap > 0.0 { 2 } else { 0 }, gap))
}

pub fn outer_fold_indicator(p: &FamilyParams) -> Result<(usize, f64)> {
    let g = fold_gaps(p)?;
    let gap = g.outer.map_or(f64::NEG_INFINITY, |t| t.gap);
    Ok((if gap > 0.0 { 2 } else { 0 }, gap))
}

/// Bisection on a monotone flag: `flag(lo)` false, `flag(hi)` true.
pub fn bisect_flag<F: Fn(f64) -> Result<bool>>(flag: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if flag(lo)? || !flag(hi)? {
        return Err(Error::NoBracket { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if flag(m)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    Ok((lo, hi))
}

/// Inner fold tip and the matching piece of Wˢ₊ at the located tangency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyWitness {
    pub tip: Point,
    pub residual: f64,
    /// Piece of Wˢ₊ = f⁻¹Wˢ_loc(Q) around the tip, as a graph over y.
    pub stable_piece: Curve,
    /// Piece of the unstable fold around the tip.
    pub fold_piece: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationReport {
    pub b: f64,
    pub orientation: Orientation,
    pub a_star: f64,
    pub a_star_bracket: (f64, f64),
    pub a_star_star: Option<f64>,
    pub a_star_star_bracket: Option<(f64, f64)>,
    /// a** from the outer-fold tangency, for the cross-check against the box-exit flag.
    pub a_star_star_tangency: Option<f64>,
    pub witness: Option<TangencyWitness>,
}

/// a*: the last internal tangency, by bisection on the inner-fold intersection count over [1.8, 2.2].
pub fn find_a_star(b: f64, orientation: Orientation) -> Result<BifurcationReport> {
    find_a_star_with(b, orientation, A_SEARCH, A_STAR_TOLERANCE)
}

pub fn find_a_star_with(b: f64, orientation: Orientation, range: (f64, f64), tol: f64) -> Result<BifurcationReport> {
    let base = FamilyParams::new(2.0, b, orientation);
    base.validate()?;
    let flag = |a: f64| -> Result<bool> { Ok(inner_fold_indicator(&base.with_a(a))?.0 == 2) };
    let (lo, hi) = bisect_flag(flag, range.0, range.1, tol)?;
    let a_star = 0.5 * (lo + hi);
    let witness = if b > 0.0 { tangency_witness(&base.with_a(a_star)).ok() } else { None };
    Ok(BifurcationReport {
        b,
        orientation,
        a_star,
        a_star_bracket: (lo, hi),
        a_star_star: None,
        a_star_star_bracket: None,
        a_star_star_tangency: None,
        witness,
    })
}

fn tangency_witness(p: &FamilyParams) -> Result<TangencyWitness> {
    let (_, qs) = find_fixed_points(p)?;
    let tip = fold_gaps(p)?.inner.ok_or(Error::NoTangency)?;
    let h = 4.0 * p.b;
    let stable: Vec<Point> = (0..=32)
        .filter_map(|i| {
            let y = tip.point.y - h + 2.0 * h * i as f64 / 32.0;
            ws_plus_x(p, &qs, y).map(|x| Point::new(x, y))
        })
        .collect();
    // the fold is the image of a horizontal-ish piece through the preimage of the tip
    let pre = crate::map_core::inverse_apply(p, tip.point)?;
    let fold: Vec<Point> = (0..=32).map(|i| apply(p, Point::new(pre.x - 1e-2 + 2e-2 * i as f64 / 32.0, pre.y))).collect();
    Ok(TangencyWitness { tip: tip.point, residual: tip.gap, stable_piece: Curve::new(stable), fold_piece: Curve::new(fold) })
}

/// Whether some point of Wᵘ(P) leaves [−2, 2]²: a fundamental domain on the local unstable direction
/// of P, iterated forward. Arc-length growth cannot see this, since Wᵘ(P) reaches the outer fold only
/// after many folding generations.
pub fn unstable_exits_box(p: &FamilyParams, samples: usize, iterations: usize) -> Result<bool> {
    let (ps, _) = find_fixed_points(p)?;
    let t0 = 1e-7;
    // f² keeps each branch on its own side when the unstable eigenvalue is negative
    let ratio = ps.lambda_u * ps.lambda_u;
    let seeds: Vec<Point> = [-1.0, 1.0]
        .iter()
        .flat_map(|side| {
            (0..samples / 2).map(move |i| {
                let t = t0 * ratio.powf((i as f64 + 0.5) / (samples / 2) as f64);
                ps.location + ps.e_u * (side * t)
            })
        })
        .collect();
    Ok(seeds.par_iter().any(|z| {
        let mut w = *z;
        for _ in 0..iterations {
            w = apply(p, w);
            if w.x.abs() > 2.0 || w.y.abs() > 2.0 {
                return true;
            }
        }
        false
    }))
}

/// a**: bisection on the box-exit flag of Wᵘ(P) below a*, cross-checked with the outer-fold tangency.
pub fn find_a_star_star(b: f64, a_star: f64) -> Result<(f64, (f64, f64), f64)> {
    let base = FamilyParams::new(2.0, b, Orientation::Preserving);
    let lo = a_star - 0.05;
    let exits = |a: f64| -> Result<bool> { unstable_exits_box(&base.with_a(a), BOX_SAMPLES, BOX_ITERATIONS) };
    let (l, h) = bisect_flag(exits, lo, a_star, A_STAR_STAR_TOLERANCE)?;
    let crosses = |a: f64| -> Result<bool> { Ok(outer_fold_indicator(&base.with_a(a))?.0 == 2) };
    let (tl, th) = bisect_flag(crosses, lo, a_star, A_STAR_STAR_TOLERANCE)?;
    Ok((0.5 * (l + h), (l, h), 0.5 * (tl + th)))
}

/// Both thresholds in one report.
pub fn bifurcation_report(b: f64, orientation: Orientation) -> Result<BifurcationReport> {
    let mut r = find_a_star(b, orientation)?;
    if b > 0.0 && orientation == Orientation::Preserving {
        let (a2, br, at) = find_a_star_star(b, r.a_star)?;
        r.a_star_star = Some(a2);
        r.a_star_star_bracket = Some(br);
        r.a_star_star_tangency = Some(at);
    }
    Ok(r)
}

/// I_n(â) = [â − κ₀ⁿ, â + κ₀ⁿ].
pub fn validity_interval(a_hat: f64, n: usize, kappa0: f64) -> (f64, f64) {
    let w = kappa0.powi(n as i32);
    (a_hat - w, a_hat + w)
}

/// Smallest half-width a track is sampled over; I_n(â) is usually far below the resolution of a.
pub const MIN_TRACK_HALF_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationTrack {
    pub a_hat: f64,
    pub order: usize,
    pub host: Curve,
    pub validity: (f64, f64),
    /// Interval actually sampled: I_n(â), widened to MIN_TRACK_HALF_WIDTH when unresolvable.
    pub window: (f64, f64),
    pub widened: bool,
    pub params: Vec<f64>,
    pub points: Vec<Point>,
    /// |ζ̇| by central differences at interior samples.
    pub speeds: Vec<f64>,
    pub max_speed: f64,
    /// κ₀^{10 log δ}.
    pub speed_bound: f64,
    pub continuous: bool,
}

impl DeformationTrack {
    pub fn point_at(&self, a: f64) -> Option<Point> {
        let i = self.params.partition_point(|v| *v < a);
        if i == 0 || i >= self.params.len() {
            return (i == 0 && a == self.params[0]).then(|| self.points[0]);
        }
        let t = (a - self.params[i - 1]) / (self.params[i] - self.params[i - 1]);
        Some(self.points[i - 1] + (self.points[i] - self.points[i - 1]) * t)
    }
}

/// ζ(a) re-solved on the host of ζ̂ at evenly spaced parameters of `interval`.
pub fn track_deformation(p: &FamilyParams, zeta_hat: &CriticalApprox, interval: (f64, f64), samples: usize) -> Result<DeformationTrack> {
    let c = Constants::for_params(p);
    let n = zeta_hat.order;
    let validity = validity_interval(p.a, n, c.kappa0);
    let (mut lo, mut hi) = interval;
    let widened = hi - lo < 2.0 * MIN_TRACK_HALF_WIDTH;
    if widened {
        let mid = 0.5 * (lo + hi);
        lo = mid - MIN_TRACK_HALF_WIDTH;
        hi = mid + MIN_TRACK_HALF_WIDTH;
    }
    let samples = samples.max(3);
    let params: Vec<f64> = (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect();
    let points: Vec<Point> = params
        .par_iter()
        .map(|a| find_critical_approx(&p.with_a(*a), &zeta_hat.host, n).map(|ca| ca.point).map_err(|_| Error::TrackLost { a: *a }))
        .collect::<Result<Vec<_>>>()?;
    let steps: Vec<f64> = points.windows(2).map(|w| w[0].dist(w[1])).collect();
    let mut sorted = steps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let continuous = steps.iter().all(|s| *s <= 10.0 * median.max(1e-15));
    let speeds: Vec<f64> = (1..samples - 1).map(|i| points[i + 1].dist(points[i - 1]) / (params[i + 1] - params[i - 1])).collect();
    let max_speed = speeds.iter().cloned().fold(0.0, f64::max);
    Ok(DeformationTrack {
        a_hat: p.a,
        order: n,
        host: zeta_hat.host.clone(),
        validity,
        window: (lo, hi),
        widened,
        params,
        points,
        speeds,
        max_speed,
        speed_bound: c.kappa0.powf(10.0 * c.delta.ln()),
        continuous,
    })
}

/// ‖ζ_ν(a) − ζ_ν(a′)‖ / (‖w_ν(ζ̂)‖ |a − a′|) over consecutive samples of the track, ζ_ν(a) = f_a^ν ζ(a).
pub fn image_speed_ratios(p: &FamilyParams, track: &DeformationTrack, nu: usize) -> Vec<f64> {
    let w = wi_sequence(p, track.points[track.points.len() / 2], nu).norm(nu);
    let imgs: Vec<Point> = track.params.iter().zip(&track.points).map(|(a, z)| iterate(&p.with_a(*a), *z, nu)).collect();
    (1..imgs.len()).map(|i| imgs[i].dist(imgs[i - 1]) / (w * (track.params[i] - track.params[i - 1]))).collect()
}

pub const CROSSING_SCAN: usize = 64;

/// The unique c₀ in the window where x(ζ_ν(c₀)) = x(z(c₀)), by a sign scan and bisection.
pub fn critical_parameter<F, G>(zeta_x: F, binding_x: G, window: (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    G: Fn(f64) -> Result<f64>,
{
    let d = |a: f64| -> Result<f64> { Ok(zeta_x(a)? - binding_x(a)?) };
    let (lo, hi) = window;
    let xs: Vec<f64> = (0..=CROSSING_SCAN).map(|i| lo + (hi - lo) * i as f64 / CROSSING_SCAN as f64).collect();
    let ds: Vec<f64> = xs.iter().map(|a| d(*a)).collect::<Result<_>>()?;
    let mut brackets = Vec::new();
    for i in 0..CROSSING_SCAN {
        if ds[i] == 0.0 {
            brackets.push((xs[i], xs[i]));
        } else if ds[i] * ds[i + 1] < 0.0 {
            brackets.push((xs[i], xs[i + 1]));
        }
    }
    if ds[CROSSING_SCAN] == 0.0 {
        brackets.push((hi, hi));
    }
    match brackets.len() {
        0 => return Err(Error::NoCrossing),
        1 => {}
        n => return Err(Error::MultipleCrossings { count: n }),
    }
    let (mut a, mut b) = brackets[0];
    if a == b {
        return Ok(a);
    }
    let mut da = d(a)?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let dm = d(m)?;
        if dm == 0.0 {
            return Ok(m);
        }
        if (dm < 0.0) == (da < 0.0) {
            a = m;
            da = dm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// The two critical approximations of R₀: tangencies of the contracting field with the unstable side
/// of R₀ inside |x| ≤ 2δ, upper then lower.
pub fn boundary_hosts(r0: &RegionR0, delta: f64) -> Vec<Curve> {
    let mut out = Vec::new();
    for upper in [true, false] {
        let verts: Vec<Point> = r0
            .arc_y
            .iter()
            .zip(&r0.arc_x)
            .filter(|(y, x)| x.abs() <= 2.0 * delta && (**y > 0.0) == upper)
            .map(|(y, x)| Point::new(*x, *y))
            .collect();
        if verts.len() >= 3 {
            let mut c = Curve::new(verts);
            if c.vertices[0].x > c.vertices[c.vertices.len() - 1].x {
                c = c.reversed();
            }
            out.push(c);
        }
    }
    out
}

/// Hosts through the preimages of the fold tips: segments tangent to Wᵘ at f⁻¹(tip), inner fold first.
/// Near a* the critical orbit is decided by the sign of a gap of order a − a*, far below the chord
/// error of the R₀ polyline, so the tangent line through the refined tip is used instead.
pub fn fold_hosts(p: &FamilyParams, half_length: f64, points: usize) -> Result<Vec<Curve>> {
    let (_, qs) = find_fixed_points(p)?;
    let g = fold_gaps(p)?;
    let ws = ws_plus_graph(p, &qs)?;
    let mut out = Vec::new();
    for tip in [g.inner, g.outer].into_iter().flatten() {
        let pre = inverse_apply(p, tip.point)?;
        let t = Point::new(ws.dxdy(tip.point.y), 1.0);
        let inv = jacobian(p, pre).inverse().ok_or(Error::NotInvertible)?;
        let mut u = inv.apply(t).normalized();
        if u.x < 0.0 {
            u = -u;
        }
        let n = points.max(3);
        let verts = (0..n)
            .map(|i| pre + u * (half_length * (2.0 * i as f64 / (n - 1) as f64 - 1.0)))
            .collect();
        out.push(Curve::new(verts));
    }
    Ok(out)
}

/// Orbit of one critical approximation against the strip |x| < 9/10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonRecurrence {
    pub host: usize,
    pub order: usize,
    pub point: Point,
    /// Smallest |x| over fⁱζ, 1 ≤ i < 20n, up to overflow.
    pub min_abs_x: f64,
    pub first_violation: Option<usize>,
}

impl NonRecurrence {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Approximations of every order n ≤ n_max on each host, with fⁱζ checked for 1 ≤ i < 20n.
pub fn non_recurrence(p: &FamilyParams, hosts: &[Curve], n_max: usize) -> Result<Vec<NonRecurrence>> {
    let mut out = Vec::new();
    for (h, host) in hosts.iter().enumerate() {
        for n in 1..=n_max {
            let ca = find_critical_approx(p, host, n)?;
            let mut w = ca.point;
            let mut rec = NonRecurrence { host: h, order: n, point: ca.point, min_abs_x: f64::INFINITY, first_violation: None };
            for i in 1..20 * n {
                w = apply(p, w);
                if overflowed(w) {
                    break;
                }
                rec.min_abs_x = rec.min_abs_x.min(w.x.abs());
                if w.x.abs() < 0.9 && rec.first_violation.is_none() {
                    rec.first_violation = Some(i);
                }
            }
            out.push(rec);
        }
    }
    Ok(out)
}

pub const EXCLUSION_ORDER: usize = 10;
pub const HOST_POINTS: usize = 401;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Good { horizon: usize },
    /// (G)_m fails first at time m for the approximation with the given index.
    Excluded { approx: usize, m: usize },
    /// Approximations not constructible, or binding control lost.
    Unresolved { reason: String },
}

impl Verdict {
    pub fn is_good(&self) -> bool {
        matches!(self, Verdict::Good { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub a: f64,
    pub b: f64,
    pub n_max: usize,
    pub approximations: Vec<Point>,
    /// Free-return log (time, distance) per approximation.
    pub returns: Vec<Vec<(usize, f64)>>,
    pub exit_times: Vec<Option<usize>>,
    pub verdict: Verdict,
}

/// (G)_m for m ≤ 20·n_max along the critical orbits of the approximations of order EXCLUSION_ORDER.
/// Hosts are the fold-tip tangent lines when both folds are found, the R₀ unstable side otherwise.
pub fn exclusion_diagnostic(p: &FamilyParams, r0: &RegionR0, n_max: usize) -> ExclusionReport {
    let c = Constants::for_params(p);
    let horizon = 20 * n_max;
    let mut report = ExclusionReport {
        a: p.a,
        b: p.b,
        n_max,
        approximations: Vec::new(),
        returns: Vec::new(),
        exit_times: Vec::new(),
        verdict: Verdict::Good { horizon },
    };
    let mut first_fail: Option<(usize, usize)> = None;
    let hosts = match fold_hosts(p, c.delta, HOST_POINTS) {
        Ok(h) if h.len() == 2 => h,
        _ => boundary_hosts(r0, c.delta),
    };
    for (idx, host) in hosts.iter().enumerate() {
        let ca = match find_critical_approx(p, host, EXCLUSION_ORDER) {
            Ok(ca) => ca,
            Err(e) => {
                report.verdict = Verdict::Unresolved { reason: format!("approximation {idx}: {e}") };
                return report;
            }
        };
        report.approximations.push(ca.point);
        let fz = apply(p, ca.point);
        let it = match decompose_orbit(p, fz, Point::new(1.0, 0.0), horizon.saturating_sub(1), 1, Some(r0), &c, &DecomposeOptions::default()) {
            Ok(it) => it,
            Err(e) => {
                report.verdict = Verdict::Unresolved { reason: format!("approximation {idx}: {e}") };
                return report;
            }
        };
        let log = it.return_log();
        for m in 1..=horizon {
            if !check_g_condition(&log, m, c.alpha).0 {
                if first_fail.map_or(true, |(_, fm)| m < fm) {
                    first_fail = Some((idx, m));
                }
                break;
            }
        }
        report.returns.push(log);
        report.exit_times.push(it.exit_time);
    }
    if report.approximations.is_empty() {
        report.verdict = Verdict::Unresolved { reason: "no host crosses the critical strip".into() };
    } else if let Some((approx, m)) = first_fail {
        report.verdict = Verdict::Excluded { approx, m };
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub samples: usize,
    pub n_max: usize,
    pub grid: usize,
    pub escape_time: usize,
    pub escape_threshold: f64,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { samples: 200, n_max: 10, grid: 40, escape_time: 10_000, escape_threshold: 0.99, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub a: f64,
    pub verdict: Verdict,
    /// Measured only when the exclusion diagnostic is good.
    pub escape_fraction: Option<f64>,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub eps: f64,
    pub interval: (f64, f64),
    /// n₀(ε)/20 exceeds the horizon: no exclusion is possible and no sample is run.
    pub trivial: bool,
    pub samples: Vec<SampleVerdict>,
    pub good_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub a_star: f64,
    pub ladder: Vec<f64>,
    /// Δ-proxy: exclusion diagnostic good up to the horizon and grid-escape fraction ≥ threshold at T.
    pub proxy: String,
    pub rungs: Vec<Rung>,
}

/// Stratified parameters in [lo, hi]: one uniform draw per stratum.
pub fn stratified(lo: f64, hi: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + rng.gen::<f64>()) / n as f64).collect()
}

pub fn classify_parameter(base: &FamilyParams, a: f64, opts: &SweepOptions) -> SampleVerdict {
    let p = base.with_a(a);
    let r0 = match build_r0(&p) {
        Ok(r) => r,
        Err(e) => {
            return SampleVerdict { a, verdict: Verdict::Unresolved { reason: e.to_string() }, escape_fraction: None, good: false };
        }
    };
    let verdict = exclusion_diagnostic(&p, &r0, opts.n_max).verdict;
    let escape_fraction = verdict.is_good().then(|| {
        let survival = grid_escape(&p, &r0, opts.grid, opts.escape_time);
        1.0 - survival.last().copied().unwrap_or(1.0)
    });
    let good = escape_fraction.is_some_and(|e| e >= opts.escape_threshold);
    SampleVerdict { a, verdict, escape_fraction, good }
}

/// Samples of [lo, hi] classified in parallel; per-sample RNG streams make the result independent of
/// the worker count.
pub fn sweep_interval(base: &FamilyParams, interval: (f64, f64), opts: &SweepOptions, stream: u64) -> Vec<SampleVerdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let params = stratified(interval.0, interval.1, opts.samples, &mut rng);
    params.par_iter().map(|a| classify_parameter(base, *a, opts)).collect()
}

/// One rung of the ladder; `index` selects the RNG stream, so rungs can be computed separately.
pub fn density_rung(base: &FamilyParams, a_star: f64, eps: f64, index: usize, opts: &SweepOptions) -> Rung {
    let c = Constants::for_params(base);
    let interval = (a_star - eps, a_star);
    let trivial = c.n0(eps) / 20.0 > (20 * opts.n_max) as f64;
    let (samples, good_fraction) = if trivial {
        (Vec::new(), 1.0)
    } else {
        let s = sweep_interval(base, interval, opts, index as u64);
        let g = s.iter().filter(|v| v.good).count() as f64 / s.len().max(1) as f64;
        (s, g)
    };
    Rung { eps, interval, trivial, samples, good_fraction }
}

pub fn sweep_proxy(opts: &SweepOptions) -> String {
    format!(
        "good = exclusion diagnostic good up to m = {} and grid-escape fraction >= {} at T = {} ({}^2 grid)",
        20 * opts.n_max,
        opts.escape_threshold,
        opts.escape_time,
        opts.grid
    )
}

pub fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("ε ladder must be positive and strictly decreasing".into()));
    }
    Ok(())
}

pub fn density_sweep(base: &FamilyParams, a_star: f64, ladder: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    validate_ladder(ladder)?;
    let rungs = ladder.iter().enumerate().map(|(i, eps)| density_rung(base, a_star, *eps, i, opts)).collect();
    Ok(SweepResult { a_star, ladder: ladder.to_vec(), proxy: sweep_proxy(opts), rungs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_indicator_switches_at_two() {
        let p = FamilyParams::new(2.0, 0.0, Orientation::Preserving);
        assert_eq!(inner_fold_indicator(&p.with_a(2.01)).unwrap().0, 2);
        assert_eq!(inner_fold_indicator(&p.with_a(1.99)).unwrap().0, 0);
    }

    #[test]
    fn affine_tracks_cross_once() {
        let c = critical_parameter(|a| Ok(3.0 * a - 1.0), |a| Ok(a), (0.0, 1.0)).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parallel_tracks_do_not_cross() {
        assert_eq!(critical_parameter(|a| Ok(a + 1.0), |a| Ok(a), (0.0, 1.0)), Err(Error::NoCrossing));
    }

    #[test]
    fn stratified_samples_one_per_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = stratified(0.0, 1.0, 10, &mut rng);
        for (i, v) in s.iter().enumerate() {
            assert!(*v >= i as f64 / 10.0 && *v < (i + 1) as f64 / 10.0);
        }
    }
}
