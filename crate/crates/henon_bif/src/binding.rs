//! Bound and fold periods, binding points, and the bound/free decomposition of orbits.

use serde::{Deserialize, Serialize};

use crate::critical::{find_critical_approx, CriticalApprox};
use crate::error::{Error, Result};
use crate::leaves::{limit_leaf, Leaf};
use crate::linalg::DerivativeHistory;
use crate::manifolds::{Curve, RegionR0};
use crate::map_core::{apply, jacobian, Constants, FamilyParams, Point};

/// D_k(ζ) = e^{−3αk} · min_{1≤i≤k} min_{i≤j≤k+1} ‖w_j‖²/‖wᵢ‖³, straight from the norms.
pub fn compute_dk(wi: &DerivativeHistory, k: usize, alpha: f64) -> f64 {
    let mut best = f64::INFINITY;
    // suffix minimum of ‖w_j‖ over j ∈ [i, k+1]
    let mut suffix = f64::INFINITY;
    for i in (1..=k).rev() {
        if i == k {
            suffix = wi.norm(k).min(wi.norm(k + 1));
        } else {
            suffix = suffix.min(wi.norm(i));
        }
        let ni = wi.norm(i);
        best = best.min(suffix * suffix / (ni * ni * ni));
    }
    (-3.0 * alpha * k as f64).exp() * best
}

/// D_k from log‖wᵢ‖ (index 0 is i = 1), for horizons where the norms overflow.
pub fn compute_dk_from_logs(log_w: &[f64], k: usize, alpha: f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut suffix = log_w[k - 1].min(log_w[k]);
    for i in (1..=k).rev() {
        suffix = suffix.min(log_w[i - 1]);
        best = best.min(2.0 * suffix - 3.0 * log_w[i - 1]);
    }
    (-3.0 * alpha * k as f64 + best).exp()
}

/// e^{−3αk}D_k ≤ D_{k+1} ≤ e^{−3α}D_k.
pub fn compte_ratio_holds(dk: f64, dk1: f64, k: usize, alpha: f64) -> bool {
    let r = dk1 / dk;
    let tol = 1e-12;
    r >= (-3.0 * alpha * k as f64).exp() * (1.0 - tol) && r <= (-3.0 * alpha).exp() * (1.0 + tol)
}

/// Tie tolerance at annulus boundaries; ties resolve outward.
pub const ANNULUS_TIE: f64 = 1e-13;

/// Largest k ≥ k_min with offset ≤ D_k/2, ties counted as outside.
pub fn annulus_index(offset: f64, dk: &[f64], k_min: usize) -> Option<usize> {
    let mut found = None;
    for k in k_min..=dk.len() {
        let half = 0.5 * dk[k - 1];
        if offset < half - ANNULUS_TIE * half.max(f64::MIN_POSITIVE) {
            found = Some(k);
        } else {
            break;
        }
    }
    found
}

/// q = min{i ∈ [1,p) : |ζ−z|^β ‖w_{j+1}‖ ≥ 1 for every i ≤ j < p}; None when the condition fails at j = p−1.
pub fn fold_period(log_w: &[f64], dist: f64, p: usize, beta: f64) -> Option<usize> {
    if p < 2 {
        return None;
    }
    let lb = beta * dist.ln();
    let ok = |j: usize| lb + log_w[j] >= -1e-12;
    let mut q = None;
    for i in (1..p).rev() {
        if ok(i) {
            q = Some(i);
        } else {
            break;
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionClass {
    Admissible,
    Critical,
    Tangential,
}

/// A critical approximation prepared for binding: its limit leaf, D_k table and χ.
#[derive(Debug, Clone)]
pub struct BindingContext {
    pub approx: CriticalApprox,
    pub leaf: Leaf,
    pub dk: Vec<f64>,
    pub chi: Vec<usize>,
    pub m: usize,
}

impl BindingContext {
    pub fn new(p: &FamilyParams, approx: CriticalApprox, c: &Constants, chi: Vec<usize>) -> Result<Self> {
        let leaf = limit_leaf(p, apply(p, approx.point))?;
        let top = 20 * approx.order - 1;
        let dk = (1..=top.min(approx.log_w.len() - 1)).map(|k| compute_dk_from_logs(&approx.log_w, k, c.alpha)).collect();
        Ok(BindingContext { approx, leaf, dk, chi, m: c.m })
    }

    pub fn chi(&self, k: usize) -> usize {
        if k >= self.m && k - self.m < self.chi.len() {
            self.chi[k - self.m]
        } else {
            k
        }
    }

    /// Horizontal offset of fz from the leaf through fζ.
    pub fn offset(&self, p: &FamilyParams, z: Point) -> f64 {
        let w = apply(p, z);
        (w.x - self.leaf.x_at(w.y)).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInfo {
    pub k: usize,
    pub p: usize,
}

/// Annulus index of fz and p = χ(k). Ok(None) is the no-binding sentinel (fz outside V_{k_min}).
pub fn bound_period(p: &FamilyParams, ctx: &BindingContext, z: Point, k_min: usize) -> Result<Option<BoundInfo>> {
    let off = ctx.offset(p, z);
    match annulus_index(off, &ctx.dk, k_min) {
        None => Ok(None),
        Some(k) if k >= 20 * ctx.approx.order - 1 => Err(Error::CriticalPosition { level: k }),
        Some(k) => Ok(Some(BoundInfo { k, p: ctx.chi(k) })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingRecord {
    /// Return time m.
    pub time: usize,
    pub point: Point,
    pub binding_point: Point,
    pub binding_order: usize,
    /// |ζ − z|.
    pub distance: f64,
    pub k: usize,
    pub position: PositionClass,
    pub bound_period: usize,
    pub fold_period: Option<usize>,
    pub deep: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateTag {
    Free,
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub base: Point,
    /// Time of the first state, 1 for critical orbits started at fζ.
    pub start_time: usize,
    pub horizon: usize,
    pub records: Vec<BindingRecord>,
    /// tags[t − start_time] for each state.
    pub tags: Vec<StateTag>,
    /// Time the orbit left R₀, if it did.
    pub exit_time: Option<usize>,
    /// Binding points use χ = identity.
    pub chi_default: bool,
}

impl Itinerary {
    pub fn return_log(&self) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.time, r.distance)).collect()
    }

    pub fn free_returns(&self) -> Vec<(usize, usize)> {
        self.records.iter().map(|r| (r.time, r.bound_period)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// Order of the binding critical approximations.
    pub binding_order: usize,
    /// Smallest annulus index that binds. V_M itself is far below desk resolution.
    pub k_min: usize,
    /// Half-length of the host segment through a return, in units of δ.
    pub host_half_width: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { binding_order: 10, k_min: 1, host_half_width: 3.0 }
    }
}

/// Straight host segment through z along u, spanning |x| ≤ w.
pub fn host_segment(z: Point, u: Point, w: f64) -> Option<Curve> {
    let u = if u.x < 0.0 { -u } else { u };
    if u.x.abs() < 1e-12 || u.slope().abs() > 0.1 {
        return None;
    }
    let t0 = (-w - z.x) / u.x;
    let t1 = (w - z.x) / u.x;
    let n = 256;
    Some(Curve::new((0..=n).map(|k| z + u * (t0 + (t1 - t0) * k as f64 / n as f64)).collect()))
}

/// The binding point for a return at z with tangent direction u: the critical approximation on the host through z.
pub fn binding_point(p: &FamilyParams, z: Point, u: Point, c: &Constants, opts: &DecomposeOptions) -> Result<BindingContext> {
    let host = host_segment(z, u, opts.host_half_width * c.delta).ok_or(Error::ControlLost { time: 0 })?;
    let ca = find_critical_approx(p, &host, opts.binding_order).map_err(|_| Error::ControlLost { time: 0 })?;
    BindingContext::new(p, ca, c, Vec::new())
}

/// Ladder over the available approximations, highest order first.
pub fn binding_ladder(p: &FamilyParams, z: Point, v: Point, xi: &[CriticalApprox], c: &Constants) -> Result<(usize, PositionClass)> {
    let mut order: Vec<usize> = (0..xi.len()).collect();
    order.sort_by(|a, b| xi[*b].order.cmp(&xi[*a].order));
    for i in order {
        let ca = &xi[i];
        if !tangential(z, v, ca.point, ca.tangent) {
            continue;
        }
        let ctx = BindingContext::new(p, ca.clone(), c, Vec::new())?;
        let off = ctx.offset(p, z);
        let class = match annulus_index(off, &ctx.dk, 1) {
            Some(k) if k >= 20 * ca.order - 1 => PositionClass::Critical,
            Some(_) => PositionClass::Admissible,
            None => PositionClass::Tangential,
        };
        return Ok((i, class));
    }
    Err(Error::LadderExhausted)
}

/// Some horizontal curve (slope and curvature ≤ 1/10) is tangent to v at z and to t at ζ:
/// tested on the cubic Hermite graph through both.
pub fn tangential(z: Point, v: Point, zeta: Point, t: Point) -> bool {
    if z == zeta {
        return v.slope().abs() <= 0.1 && t.slope().abs() <= 0.1;
    }
    let (a, b) = if z.x <= zeta.x { ((z, v), (zeta, t)) } else { ((zeta, t), (z, v)) };
    let h = b.0.x - a.0.x;
    if h <= 0.0 {
        return false;
    }
    let (s0, s1) = (a.1.y / a.1.x, b.1.y / b.1.x);
    if !(s0.is_finite() && s1.is_finite()) {
        return false;
    }
    let (y0, y1) = (a.0.y, b.0.y);
    let n = 32;
    (0..=n).all(|k| {
        let u = k as f64 / n as f64;
        let d1 = (6.0 * u * u - 6.0 * u) * (y0 - y1) / h + (3.0 * u * u - 4.0 * u + 1.0) * s0 + (3.0 * u * u - 2.0 * u) * s1;
        let d2 = ((12.0 * u - 6.0) * (y0 - y1) / h + (6.0 * u - 4.0) * s0 + (6.0 * u - 2.0) * s1) / h;
        d1.abs() <= 0.1 && d2.abs() / (1.0 + d1 * d1).powf(1.5) <= 0.1
    })
}

/// Bound/free decomposition of the orbit of z with tangent v, states t = 0..=T (shifted by start_time).
pub fn decompose_orbit(
    p: &FamilyParams,
    z: Point,
    v: Point,
    horizon: usize,
    start_time: usize,
    region: Option<&RegionR0>,
    c: &Constants,
    opts: &DecomposeOptions,
) -> Result<Itinerary> {
    let mut tags = Vec::with_capacity(horizon + 1);
    let mut records: Vec<BindingRecord> = Vec::new();
    let mut w = z;
    let mut u = v.normalized();
    let mut bound_until: Option<usize> = None;
    let mut exit_time = None;
    for step in 0..=horizon {
        let t = step + start_time;
        if let Some(r) = region {
            if !r.contains(w) {
                exit_time = Some(t);
                break;
            }
        }
        let bound = bound_until.map_or(false, |e| t <= e);
        if bound {
            tags.push(StateTag::Bound);
        } else {
            tags.push(StateTag::Free);
            if w.x.abs() < c.delta {
                let ctx = binding_point(p, w, u, c, opts).map_err(|_| Error::ControlLost { time: t })?;
                let dist = ctx.approx.point.dist(w);
                let (k, position, pb) = match bound_period(p, &ctx, w, opts.k_min) {
                    Ok(Some(b)) => (b.k, PositionClass::Admissible, b.p),
                    Ok(None) => (0, PositionClass::Tangential, 0),
                    Err(Error::CriticalPosition { level }) => (level, PositionClass::Critical, 20 * ctx.approx.order - 1),
                    Err(e) => return Err(e),
                };
                let q = if pb >= 2 { fold_period(&ctx.approx.log_w, dist, pb, c.beta) } else { None };
                records.push(BindingRecord {
                    time: t,
                    point: w,
                    binding_point: ctx.approx.point,
                    binding_order: ctx.approx.order,
                    distance: dist,
                    k,
                    position,
                    bound_period: pb,
                    fold_period: q,
                    deep: false,
                });
                if pb > 0 {
                    bound_until = Some(t + pb);
                }
            }
        }
        if step == horizon {
            break;
        }
        let dv = jacobian(p, w).apply(u);
        let n = dv.norm();
        u = if n > 0.0 { dv * (1.0 / n) } else { u };
        w = apply(p, w);
        if !w.is_finite() {
            exit_time = Some(t + 1);
            break;
        }
    }
    let deep = deep_returns(&records.iter().map(|r| r.distance).collect::<Vec<_>>());
    for (r, d) in records.iter_mut().zip(deep) {
        r.deep = d;
    }
    Ok(Itinerary { base: z, start_time, horizon, records, tags, exit_time, chi_default: true })
}

/// Deep-return flags for returns with distances d₁, d₂, …: the first is deep; return t+1 is deep when
/// Σ_{j=s+1}^{t+1} 2 log d_j ≤ log d_s for every s ≤ t.
pub fn deep_returns(distances: &[f64]) -> Vec<bool> {
    let logs: Vec<f64> = distances.iter().map(|d| d.ln()).collect();
    (0..logs.len())
        .map(|t1| {
            if t1 == 0 {
                return true;
            }
            let mut tail = 2.0 * logs[t1];
            for s in (0..t1).rev() {
                if tail > logs[s] {
                    return false;
                }
                tail += 2.0 * logs[s];
            }
            true
        })
        .collect()
}

/// Θ_ν = κ₀ [Σ σᵢ⁻¹]⁻¹ over free i < ν; returns are (n_s, |f^{n_s}ζ − z_s|, p_s), log_w[i−1] = log‖wᵢ‖.
pub fn theta_nu(log_w: &[f64], returns: &[(usize, f64, usize)], nu: usize, kappa0: f64) -> f64 {
    let mut sum = 0.0;
    let mut i = 1;
    while i < nu {
        if let Some(&(_, d, ps)) = returns.iter().find(|r| r.0 == i) {
            // σ at the return, then skip its bound period
            let sigma = (10.0 / 9.0 * d.ln() - log_w[i - 1]).exp();
            sum += 1.0 / sigma;
            i += ps.max(1);
            continue;
        }
        let log_sigma = log_w[i] - 2.0 * log_w[i - 1];
        sum += (-log_sigma).exp();
        i += 1;
    }
    kappa0 / sum
}

/// (G)ₘ: Σ log dᵢ over free returns nᵢ ≤ m, against −αm. Returns (pass, margin).
pub fn check_g_condition(returns: &[(usize, f64)], m: usize, alpha: f64) -> (bool, f64) {
    let s: f64 = returns.iter().filter(|r| r.0 <= m).map(|r| r.1.ln()).sum();
    let margin = s + alpha * m as f64;
    (margin >= 0.0, margin)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub distance: f64,
    pub k: usize,
    pub p: usize,
    pub q: Option<usize>,
    /// p relative to the bounds of (a): p·log C₀ / (3 log(1/d)) and p·λ / (3 log(1/d)).
    pub a_lower_ratio: f64,
    pub a_upper_ratio: f64,
    /// q / (βp).
    pub b_constant: f64,
    /// max over 1 ≤ i ≤ p of |fⁱζ − fⁱz| / e^{−2αp}.
    pub c_ratio: f64,
    /// ‖Df^q v‖ / (d‖v‖) and ‖Df^q v‖ / (d^{1−β}‖v‖).
    pub d_lower_ratio: f64,
    pub d_upper_ratio: f64,
    /// ‖Df^p v‖ / (d^{−1+α/log C₀}‖v‖) and ‖Df^p v‖ / (e^{λp/3}‖v‖).
    pub e_first_ratio: f64,
    pub e_second_ratio: f64,
    /// min over i < p of ‖Df^p v‖ / ((δ/10)‖Dfⁱv‖).
    pub f_ratio: f64,
}

/// Measure every inequality of the recovery estimates for one admissible binding.
pub fn recovery_report(p: &FamilyParams, ctx: &BindingContext, z: Point, v: Point, k: usize, pb: usize, c: &Constants) -> RecoveryReport {
    let zeta = ctx.approx.point;
    let d = zeta.dist(z);
    let l = (1.0 / d).ln();
    let q = fold_period(&ctx.approx.log_w, d, pb, c.beta);
    let mut norms = vec![v.norm()];
    let mut u = v;
    let mut wz = z;
    let mut wzeta = zeta;
    let mut c_ratio: f64 = 0.0;
    for _ in 0..pb {
        u = jacobian(p, wz).apply(u);
        wz = apply(p, wz);
        wzeta = apply(p, wzeta);
        norms.push(u.norm());
        c_ratio = c_ratio.max(wz.dist(wzeta) / (-2.0 * c.alpha * pb as f64).exp());
    }
    let nv = norms[0];
    let np = norms[pb];
    let lc0 = c.c0.ln();
    let (d_lower_ratio, d_upper_ratio) = match q {
        Some(q) => (norms[q] / (d * nv), norms[q] / (d.powf(1.0 - c.beta) * nv)),
        None => (f64::NAN, f64::NAN),
    };
    let f_ratio = norms[..pb].iter().map(|ni| np / (c.delta / 10.0 * ni)).fold(f64::INFINITY, f64::min);
    RecoveryReport {
        distance: d,
        k,
        p: pb,
        q,
        a_lower_ratio: pb as f64 * lc0 / (3.0 * l),
        a_upper_ratio: pb as f64 * c.lambda / (3.0 * l),
        b_constant: q.map_or(f64::NAN, |q| q as f64 / (c.beta * pb as f64)),
        c_ratio,
        d_lower_ratio,
        d_upper_ratio,
        e_first_ratio: np / (d.powf(-1.0 + c.alpha / lc0) * nv),
        e_second_ratio: np / ((c.lambda * pb as f64 / 3.0).exp() * nv),
        f_ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometric(n: usize) -> DerivativeHistory {
        DerivativeHistory::from_norms(Point::new(0.0, 0.0), &(0..n).map(|i| 4f64.powi(i as i32)).collect::<Vec<_>>())
    }

    #[test]
    fn dk_geometric_closed_form() {
        let w = geometric(10);
        let d = compute_dk(&w, 5, 0.01);
        let expect = (-0.15f64).exp() * 4f64.powi(-4);
        assert!((d - expect).abs() / expect < 1e-14);
        assert!((d - 3.362e-3).abs() < 1e-6);
    }

    #[test]
    fn dk_unit_history() {
        let w = DerivativeHistory::from_norms(Point::new(0.0, 0.0), &[1.0, 1.0]);
        assert!((compute_dk(&w, 1, 0.01) - (-0.03f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fold_period_examples() {
        let logs: Vec<f64> = (0..40).map(|i| i as f64 * 4f64.ln()).collect();
        assert_eq!(fold_period(&logs, 4f64.powi(-10), 20, 0.2), Some(2));
        assert_eq!(fold_period(&logs, 1.0, 20, 0.2), Some(1));
    }

    #[test]
    fn deep_return_examples() {
        let e = std::f64::consts::E;
        assert_eq!(deep_returns(&[1.0 / e]), vec![true]);
        assert_eq!(deep_returns(&[1.0 / e, e.powi(-10)]), vec![true, true]);
        assert_eq!(deep_returns(&[e.powi(-10), 1.0 / e]), vec![true, false]);
    }

    #[test]
    fn theta_examples() {
        let kappa0 = 1e-9;
        assert!((theta_nu(&[0.0, 0.0], &[], 2, kappa0) - kappa0).abs() < 1e-24);
        let logs: Vec<f64> = (0..10).map(|i| i as f64 * 4f64.ln()).collect();
        let th = theta_nu(&logs, &[], 5, kappa0);
        let sum: f64 = (1..=4).map(|i| 4f64.powi(i - 2)).sum();
        assert!((th - kappa0 / sum).abs() / th < 1e-14);
    }

    #[test]
    fn g_condition_examples() {
        assert!(check_g_condition(&[], 50, 0.01).0);
        let (ok, margin) = check_g_condition(&[(10, (-0.25f64).exp())], 50, 0.01);
        assert!(ok && (margin - 0.25).abs() < 1e-12);
        assert!(!check_g_condition(&[(10, (-1.0f64).exp())], 50, 0.01).0);
    }
}
