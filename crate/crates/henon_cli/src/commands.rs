use std::fmt;
use std::fs;

use serde::{Deserialize, Serialize};

use henon_bif::binding::{compte_ratio_holds, compute_dk_from_logs, decompose_orbit, DecomposeOptions, StateTag};
use henon_bif::critical::{build_chi, build_critical_regions, critical_partition, find_critical_approx, find_critical_point};
use henon_bif::escape::{
    annulus_seed, grid_escape, leaf_intersection_proportion, omega_ratio, stopping_partition, transitivity_witness, CloseReturnBoxes,
    StopKind, MIN_CROSSING_ANGLE,
};
use henon_bif::leaves::{endpoint_contraction, fitted_contraction, limit_leaf};
use henon_bif::manifolds::{
    boundary_saddle, build_r0, find_fixed_points, grow_unstable_manifold, ws_loc_graph, CornerKind, Curve, RegionR0, Saddle,
};
use henon_bif::map_core::{apply, Constants, Point};
use henon_bif::sweep::{
    boundary_hosts, density_rung, find_a_star, find_a_star_star, fold_hosts, sweep_proxy, BifurcationReport, Rung, SweepOptions,
    SweepResult, Verdict, HOST_POINTS,
};
use henon_bif::{Error, FamilyParams, Orientation};

use crate::config::RunConfig;
use crate::output::{fmt_f, read_json, Cell, Plot, Sink};
use crate::{BifurcationCmd, CriticalCmd, EscapeCmd};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Missing(String),
    Numeric(Error),
    Failed(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Numeric(Error::Config(_)) => 2,
            CliError::Missing(_) => 3,
            CliError::Numeric(_) | CliError::Failed(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Missing(m) => write!(f, "{m}"),
            CliError::Numeric(e) => write!(f, "{e}"),
            CliError::Failed(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type Res = Result<(), CliError>;

fn xy(z: Point) -> [Cell; 2] {
    [Cell::F(z.x), Cell::F(z.y)]
}

fn row<const N: usize>(cells: [Cell; N]) -> Vec<Cell> {
    cells.into_iter().collect()
}

fn pts(c: &[Point]) -> Vec<(f64, f64)> {
    c.iter().map(|z| (z.x, z.y)).collect()
}

fn saddle_row(s: &Saddle, p: &FamilyParams) -> Vec<Cell> {
    let residual = (apply(p, s.location) - s.location).norm();
    let [x, y] = xy(s.location);
    let mut r = vec![Cell::S(format!("{:?}", s.label)), x, y, s.lambda_u.into(), s.lambda_s.into()];
    r.extend(xy(s.e_u));
    r.extend(xy(s.e_s));
    r.push(residual.into());
    r
}

pub fn fixed_points(cfg: &RunConfig) -> Res {
    let p = cfg.params();
    let (ps, qs) = find_fixed_points(&p)?;
    let mut sink = Sink::new(cfg, "fixed-points")?;
    let mut header = vec!["label", "x", "y", "lambda_u", "lambda_s", "e_u_x", "e_u_y", "e_s_x", "e_s_y", "residual"];
    let mut rows = vec![saddle_row(&ps, &p), saddle_row(&qs, &p)];
    if p.is_degenerate() {
        // 1-D oracle: roots of a x² + x − 1 and the multiplier −2ax
        let disc = (1.0 + 4.0 * p.a).sqrt();
        let roots = [(disc - 1.0) / (2.0 * p.a), (-1.0 - disc) / (2.0 * p.a)];
        header.extend(["oracle_x", "oracle_multiplier"]);
        for (r, x) in rows.iter_mut().zip(roots) {
            r.push(x.into());
            r.push((-2.0 * p.a * x).into());
        }
        println!("degenerate mode (b = 0): 1-D map x -> 1 - a x^2, oracle fixed points {} and {}", fmt_f(roots[0]), fmt_f(roots[1]));
    }
    for s in [&ps, &qs] {
        println!(
            "{:?}: ({}, {}) lambda_u {} lambda_s {} e_u ({}, {}) e_s ({}, {})",
            s.label,
            fmt_f(s.location.x),
            fmt_f(s.location.y),
            fmt_f(s.lambda_u),
            fmt_f(s.lambda_s),
            fmt_f(s.e_u.x),
            fmt_f(s.e_u.y),
            fmt_f(s.e_s.x),
            fmt_f(s.e_s.y)
        );
    }
    sink.csv("fixed_points.csv", &header, rows)?;
    sink.report();
    Ok(())
}

pub fn manifold(cfg: &RunConfig) -> Res {
    let p = cfg.params();
    let (ps, qs) = find_fixed_points(&p)?;
    let saddle = boundary_saddle(&p, &ps, &qs);
    let um = grow_unstable_manifold(&p, &saddle, cfg.arc_budget)?;
    let ws = ws_loc_graph(&p, &qs)?;
    let mut sink = Sink::new(cfg, "manifold")?;
    let mut rows = Vec::new();
    for (name, br) in [("wu_plus", &um.plus), ("wu_minus", &um.minus)] {
        for (i, z) in br.vertices.iter().enumerate() {
            let [x, y] = xy(*z);
            rows.push(row([name.into(), i.into(), x, y]));
        }
    }
    let ws_pts: Vec<Point> = ws.ys.iter().zip(&ws.xs).map(|(y, x)| Point::new(*x, *y)).collect();
    for (i, z) in ws_pts.iter().enumerate() {
        let [x, y] = xy(*z);
        rows.push(row(["ws_loc_q".into(), i.into(), x, y]));
    }
    println!(
        "Wu({:?}): {} + {} vertices, arclength {} + {}; Ws_loc(Q) fit residual {}",
        saddle.label,
        um.plus.vertices.len(),
        um.minus.vertices.len(),
        fmt_f(um.plus.arclength),
        fmt_f(um.minus.arclength),
        fmt_f(ws.fit_residual)
    );
    sink.csv("manifold.csv", &["branch", "index", "x", "y"], rows)?;
    let plot = Plot::new("invariant manifolds", "x", "y")
        .scatter("Wu +", pts(&um.plus.vertices))
        .scatter("Wu -", pts(&um.minus.vertices))
        .line("Ws_loc(Q)", pts(&ws_pts));
    sink.svg("manifold.svg", &plot)?;
    sink.report();
    Ok(())
}

#[derive(Serialize)]
struct RegionSummary {
    a: f64,
    b: f64,
    orientation: Orientation,
    y_range: (f64, f64),
    corners: [CornerKind; 2],
    gaps: [f64; 2],
    tip: Point,
    saddle_p: Saddle,
    saddle_q: Saddle,
    d1_y_bound: f64,
    arc_vertices: usize,
    bounds: (f64, f64, f64, f64),
}

fn summary(r0: &RegionR0) -> RegionSummary {
    RegionSummary {
        a: r0.a,
        b: r0.b,
        orientation: r0.orientation,
        y_range: (r0.y_lo, r0.y_hi),
        corners: r0.corners,
        gaps: r0.gaps,
        tip: r0.tip,
        saddle_p: r0.saddle_p,
        saddle_q: r0.saddle_q,
        d1_y_bound: r0.d1_y_bound,
        arc_vertices: r0.arc_y.len(),
        bounds: r0.bounds(),
    }
}

pub fn region(cfg: &RunConfig) -> Res {
    let p = cfg.params();
    let r0 = build_r0(&p)?;
    let mut sink = Sink::new(cfg, "region")?;
    let boundary = r0.boundary();
    sink.csv("region.csv", &["index", "x", "y"], boundary.iter().enumerate().map(|(i, z)| {
        let [x, y] = xy(*z);
        row([i.into(), x, y])
    }))?;
    sink.json("region.json", &summary(&r0))?;
    sink.svg("region.svg", &Plot::new("R0", "x", "y").line("boundary", pts(&boundary)))?;
    println!("R0: y in [{}, {}], tip ({}, {}), corners {:?}", fmt_f(r0.y_lo), fmt_f(r0.y_hi), fmt_f(r0.tip.x), fmt_f(r0.tip.y), r0.corners);
    sink.report();
    Ok(())
}

pub fn leaves(cfg: &RunConfig) -> Res {
    let p = cfg.params();
    let half = cfg.leaves.div_ceil(2).max(1);
    let bases: Vec<Point> = (0..cfg.leaves)
        .map(|i| {
            let j = i % half;
            let sign = if i < half { 1.0 } else { -1.0 };
            Point::new(sign * (0.15 + 0.7 * j as f64 / half as f64), 0.0)
        })
        .collect();
    let mut rows = Vec::new();
    let mut sums = Vec::new();
    let mut plot = Plot::new("stable leaves", "x", "y");
    for (i, z) in bases.iter().enumerate() {
        let leaf = limit_leaf(&p, *z)?;
        let contraction = fitted_contraction(&endpoint_contraction(&p, &leaf, 20), 1e-15);
        for ((y, x), s) in leaf.ys.iter().zip(&leaf.xs).zip(&leaf.slopes) {
            rows.push(row([i.into(), (*y).into(), (*x).into(), (*s).into()]));
        }
        sums.push(row([i.into(), z.x.into(), z.y.into(), leaf.kappa.into(), leaf.marginal.into(), contraction.into()]));
        if i < 6 {
            plot = plot.line(&format!("leaf {i}"), leaf.ys.iter().zip(&leaf.xs).map(|(y, x)| (*x, *y)).collect());
        }
    }
    let mut sink = Sink::new(cfg, "leaves")?;
    sink.csv("leaves.csv", &["leaf", "y", "x", "slope"], rows)?;
    sink.csv("leaves_summary.csv", &["leaf", "base_x", "base_y", "kappa", "marginal", "endpoint_contraction"], sums)?;
    sink.svg("leaves.svg", &plot)?;
    println!("{} leaves", bases.len());
    sink.report();
    Ok(())
}

/// The inner-fold host when both fold tips resolve, the upper R₀ host otherwise.
fn critical_host(p: &FamilyParams, c: &Constants) -> Result<Curve, CliError> {
    if let Ok(h) = fold_hosts(p, c.delta, HOST_POINTS) {
        if let Some(first) = h.into_iter().next() {
            return Ok(first);
        }
    }
    let r0 = build_r0(p)?;
    boundary_hosts(&r0, c.delta).into_iter().next().ok_or_else(|| CliError::Numeric(Error::NoTangency))
}

pub fn critical(cfg: &RunConfig, what: CriticalCmd) -> Res {
    let p = cfg.params();
    let c = cfg.constants();
    match what {
        CriticalCmd::Approx => {
            let host = critical_host(&p, &c)?;
            let ca = find_critical_approx(&p, &host, cfg.order)?;
            println!("order {}: ({}, {}), residual {}", ca.order, fmt_f(ca.point.x), fmt_f(ca.point.y), fmt_f(ca.residual));
            let mut sink = Sink::new(cfg, "critical approx")?;
            sink.json("critical_approx.json", &ca)?;
            sink.report();
        }
        CriticalCmd::Point => {
            let host = critical_host(&p, &c)?;
            let cp = find_critical_point(&p, &host)?;
            println!(
                "critical point ({}, {}), {} orders, leaf residual {}",
                fmt_f(cp.point.x),
                fmt_f(cp.point.y),
                cp.record.len(),
                fmt_f(cp.leaf_residual)
            );
            let mut sink = Sink::new(cfg, "critical point")?;
            sink.csv("critical_point.csv", &["order", "x", "y", "gap"], cp.record.iter().map(|s| {
                row([s.order.into(), s.point.x.into(), s.point.y.into(), s.gap.into()])
            }))?;
            sink.json("critical_point.json", &cp)?;
            sink.report();
        }
        CriticalCmd::Regions => {
            let r0 = build_r0(&p)?;
            let regions = build_critical_regions(&p, &r0, cfg.k_max)?;
            let mut rows = Vec::new();
            let mut plot = Plot::new("critical regions", "x", "y");
            for reg in &regions {
                for (i, comp) in reg.components.iter().enumerate() {
                    let m = &comp.metrics;
                    rows.push(row([
                        reg.level.into(),
                        i.into(),
                        comp.x_range.0.into(),
                        comp.x_range.1.into(),
                        comp.critical[0].x.into(),
                        comp.critical[0].y.into(),
                        m.horizontal_length[0].into(),
                        m.horizontal_length[1].into(),
                        m.hausdorff_gap.into(),
                        m.midpoint_offset[0].into(),
                        m.midpoint_offset[1].into(),
                    ]));
                    if reg.level <= 2 {
                        for b in &comp.boundaries {
                            plot = plot.line(&format!("level {}", reg.level), pts(&b.curve.vertices));
                        }
                    }
                }
                println!("level {}: {} components", reg.level, reg.components.len());
            }
            let mut sink = Sink::new(cfg, "critical regions")?;
            sink.csv(
                "regions.csv",
                &["level", "component", "x_lo", "x_hi", "critical_x", "critical_y", "length_lower", "length_upper", "hausdorff_gap", "mid_offset_lower", "mid_offset_upper"],
                rows,
            )?;
            sink.json("regions.json", &regions)?;
            sink.svg("regions.svg", &plot)?;
            sink.report();
        }
        CriticalCmd::Partition => {
            let host = critical_host(&p, &c)?;
            let cp = find_critical_point(&p, &host)?;
            let chi = build_chi(&c, 20 * cfg.order, &[]);
            let parts = critical_partition(&p, &host, &cp, &chi, &c)?;
            println!("{} elements around ({}, {})", parts.len(), fmt_f(cp.point.x), fmt_f(cp.point.y));
            let mut sink = Sink::new(cfg, "critical partition")?;
            sink.csv("partition.csv", &["k", "slice", "side", "bound_period", "x0", "y0", "x1", "y1"], parts.iter().map(|e| {
                let a = e.curve.vertices[0];
                let b = *e.curve.vertices.last().unwrap();
                row([e.k.into(), e.slice.into(), (e.side as i64).into(), e.bound_period.into(), a.x.into(), a.y.into(), b.x.into(), b.y.into()])
            }))?;
            sink.report();
        }
    }
    Ok(())
}

pub fn orbit(cfg: &RunConfig) -> Res {
    let p = cfg.params();
    let c = cfg.constants();
    let r0 = build_r0(&p)?;
    let z0 = Point::new(cfg.x, cfg.y);
    let it = decompose_orbit(&p, z0, Point::new(1.0, 0.0), cfg.steps, 0, Some(&r0), &c, &DecomposeOptions::default())?;
    let mut z = z0;
    let mut rows = Vec::new();
    for (t, tag) in it.tags.iter().enumerate() {
        let name = match tag {
            StateTag::Free => "free",
            StateTag::Bound => "bound",
        };
        rows.push(row([t.into(), z.x.into(), z.y.into(), name.into()]));
        z = apply(&p, z);
    }
    let mut sink = Sink::new(cfg, "orbit decompose")?;
    sink.csv("orbit.csv", &["t", "x", "y", "state"], rows)?;
    sink.csv(
        "bindings.csv",
        &["time", "x", "y", "binding_x", "binding_y", "distance", "k", "position", "bound_period", "fold_period", "deep"],
        it.records.iter().map(|r| {
            row([
                r.time.into(),
                r.point.x.into(),
                r.point.y.into(),
                r.binding_point.x.into(),
                r.binding_point.y.into(),
                r.distance.into(),
                r.k.into(),
                format!("{:?}", r.position).to_lowercase().into(),
                r.bound_period.into(),
                r.fold_period.map_or(Cell::S(String::new()), |q| q.into()),
                r.deep.into(),
            ])
        }),
    )?;
    sink.json("orbit.json", &it)?;
    println!(
        "{} states, {} free returns, exit {}",
        it.tags.len(),
        it.records.len(),
        it.exit_time.map_or("none".to_string(), |t| t.to_string())
    );
    sink.report();
    Ok(())
}

const ASTAR_FILE: &str = "astar.json";

fn stored_a_star(cfg: &RunConfig) -> Option<BifurcationReport> {
    let v = read_json(&cfg.out.join(ASTAR_FILE))?;
    let r: BifurcationReport = serde_json::from_value(v.get("result")?.clone()).ok()?;
    (r.b == cfg.b && r.orientation == cfg.orientation).then_some(r)
}

fn locate_a_star(cfg: &RunConfig) -> Result<BifurcationReport, CliError> {
    let r = find_a_star(cfg.b, cfg.orientation)?;
    let mut sink = Sink::new(cfg, "bifurcation find-astar")?;
    sink.json(ASTAR_FILE, &r)?;
    println!(
        "a* = {} in [{}, {}] (width {})",
        fmt_f(r.a_star),
        fmt_f(r.a_star_bracket.0),
        fmt_f(r.a_star_bracket.1),
        fmt_f(r.a_star_bracket.1 - r.a_star_bracket.0)
    );
    sink.report();
    Ok(r)
}

/// a* from the config, then from a previous find-astar in the output directory, then computed when `auto`.
fn need_a_star(cfg: &RunConfig, auto: bool) -> Result<f64, CliError> {
    if let Some(a) = cfg.a_star {
        return Ok(a);
    }
    if let Some(r) = stored_a_star(cfg) {
        return Ok(r.a_star);
    }
    if auto {
        return Ok(locate_a_star(cfg)?.a_star);
    }
    Err(CliError::Missing("a* unlocated: run find-astar first (or pass --auto)".into()))
}

#[derive(Serialize, Deserialize)]
struct SweepCheckpoint {
    fingerprint: Vec<(String, String)>,
    a_star: f64,
    rungs: Vec<Rung>,
}

fn fingerprint(cfg: &RunConfig) -> Vec<(String, String)> {
    cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

const SWEEP_CHECKPOINT: &str = "sweep.checkpoint.json";

fn sweep(cfg: &RunConfig, auto: bool) -> Res {
    let a_star = need_a_star(cfg, auto)?;
    let base = cfg.params_at(a_star);
    let opts = SweepOptions {
        samples: cfg.samples,
        n_max: cfg.n_max,
        grid: cfg.sweep_grid,
        escape_time: cfg.sweep_t,
        escape_threshold: cfg.sweep_threshold,
        seed: cfg.seed,
    };
    fs::create_dir_all(&cfg.out)?;
    let ck_path = cfg.out.join(SWEEP_CHECKPOINT);
    let fp = fingerprint(cfg);
    let mut done: Vec<Rung> = fs::read_to_string(&ck_path)
        .ok()
        .and_then(|t| serde_json::from_str::<SweepCheckpoint>(&t).ok())
        .filter(|ck| ck.fingerprint == fp && ck.a_star == a_star)
        .map(|ck| ck.rungs)
        .unwrap_or_default();
    if !done.is_empty() {
        println!("resuming from {} ({} rungs done)", ck_path.display(), done.len());
    }
    for (i, eps) in cfg.eps.iter().enumerate() {
        if i < done.len() && done[i].eps == *eps {
            continue;
        }
        done.truncate(i);
        let rung = density_rung(&base, a_star, *eps, i, &opts);
        println!("eps {}: good fraction {}", fmt_f(*eps), fmt_f(rung.good_fraction));
        done.push(rung);
        let ck = SweepCheckpoint { fingerprint: fp.clone(), a_star, rungs: done.clone() };
        fs::write(&ck_path, serde_json::to_string(&ck).map_err(std::io::Error::other)?)?;
    }
    let result = SweepResult { a_star, ladder: cfg.eps.clone(), proxy: sweep_proxy(&opts), rungs: done };
    let mut sink = Sink::new(cfg, "bifurcation sweep")?;
    sink.csv(
        "sweep.csv",
        &["eps", "a_lo", "a_hi", "trivial", "samples", "good", "good_fraction"],
        result.rungs.iter().map(|r| {
            let good = r.samples.iter().filter(|s| s.good).count();
            row([r.eps.into(), r.interval.0.into(), r.interval.1.into(), r.trivial.into(), r.samples.len().into(), good.into(), r.good_fraction.into()])
        }),
    )?;
    let mut samples = Vec::new();
    for r in &result.rungs {
        for s in &r.samples {
            let (verdict, m) = match &s.verdict {
                Verdict::Good { horizon } => ("good", horizon.to_string()),
                Verdict::Excluded { m, .. } => ("excluded", m.to_string()),
                Verdict::Unresolved { .. } => ("unresolved", String::new()),
            };
            samples.push(row([
                r.eps.into(),
                s.a.into(),
                verdict.into(),
                m.into(),
                s.escape_fraction.map_or(Cell::S(String::new()), Cell::F),
                s.good.into(),
            ]));
        }
    }
    sink.csv("sweep_samples.csv", &["eps", "a", "verdict", "m", "escape_fraction", "good"], samples)?;
    sink.json("sweep.json", &result)?;
    let plot = Plot::new("good fraction", "log10 eps", "good fraction").line(
        "good fraction",
        result.rungs.iter().map(|r| (r.eps.log10(), r.good_fraction)).collect(),
    );
    sink.svg("sweep.svg", &plot)?;
    sink.report();
    Ok(())
}

pub fn bifurcation(cfg: &RunConfig, what: BifurcationCmd, auto: bool) -> Res {
    match what {
        BifurcationCmd::FindAstar => locate_a_star(cfg).map(|_| ()),
        BifurcationCmd::FindAstarstar => {
            let a_star = need_a_star(cfg, auto)?;
            let (a2, bracket, tangency) = find_a_star_star(cfg.b, a_star)?;
            #[derive(Serialize)]
            struct Report {
                a_star: f64,
                a_star_star: f64,
                bracket: (f64, f64),
                outer_fold_tangency: f64,
            }
            let mut sink = Sink::new(cfg, "bifurcation find-astarstar")?;
            sink.json("astarstar.json", &Report { a_star, a_star_star: a2, bracket, outer_fold_tangency: tangency })?;
            println!("a** = {} in [{}, {}], outer-fold tangency {}", fmt_f(a2), fmt_f(bracket.0), fmt_f(bracket.1), fmt_f(tangency));
            sink.report();
            Ok(())
        }
        BifurcationCmd::Sweep => sweep(cfg, auto),
    }
}

#[derive(Serialize)]
struct SegmentSummary {
    depth: usize,
    elements: usize,
    grown: usize,
    escaped: usize,
    remaining: f64,
    exhausted: bool,
    fit: Option<henon_bif::escape::TailFit>,
    distortion_constant: Option<f64>,
}

pub fn escape(cfg: &RunConfig, what: EscapeCmd) -> Res {
    let p = cfg.params();
    let c = cfg.constants();
    match what {
        EscapeCmd::Grid => {
            let r0 = build_r0(&p)?;
            let surv = grid_escape(&p, &r0, cfg.grid, cfg.t_max);
            let mut sink = Sink::new(cfg, "escape grid")?;
            sink.csv("survival.csv", &["t", "fraction"], surv.iter().enumerate().map(|(t, f)| row([t.into(), (*f).into()])))?;
            let plot = Plot::new("survival in R0", "t", "fraction").log_y().line("grid", surv.iter().enumerate().map(|(t, f)| (t as f64, *f)).collect());
            sink.svg("survival.svg", &plot)?;
            println!("survival at T = {}: {}", cfg.t_max, fmt_f(*surv.last().unwrap_or(&1.0)));
            sink.report();
        }
        EscapeCmd::Segment => {
            let r0 = build_r0(&p)?;
            let seed = annulus_seed(&r0, c.delta, 1e-6).ok_or(Error::NoTangency)?;
            let part = stopping_partition(&p, &r0, &seed, cfg.depth);
            let exhausted = part.remaining > 0.5;
            let count = |k: StopKind| part.elements.iter().filter(|e| e.kind == k).count();
            let summary = SegmentSummary {
                depth: part.depth,
                elements: part.elements.len(),
                grown: count(StopKind::Grown),
                escaped: count(StopKind::Escaped),
                remaining: part.remaining,
                exhausted,
                fit: part.fit.clone(),
                distortion_constant: part.distortion_constant,
            };
            let mut sink = Sink::new(cfg, "escape segment")?;
            sink.csv("stopping_tail.csv", &["n", "mass"], part.tail.iter().enumerate().map(|(n, m)| row([n.into(), (*m).into()])))?;
            sink.csv(
                "stopping_elements.csv",
                &["s0", "s1", "stop", "kind", "log_distortion", "image_distance"],
                part.elements.iter().map(|e| {
                    let kind = match e.kind {
                        StopKind::Grown => "grown",
                        StopKind::Escaped => "escaped",
                    };
                    row([e.s.0.into(), e.s.1.into(), e.stop.into(), kind.into(), e.log_distortion.into(), e.image_distance.into()])
                }),
            )?;
            sink.json("stopping.json", &summary)?;
            let plot = Plot::new("stopping-time tail", "n", "|{S > n}|").log_y().line("tail", part.tail.iter().enumerate().map(|(n, m)| (n as f64, *m)).collect());
            sink.svg("stopping_tail.svg", &plot)?;
            match &part.fit {
                Some(f) => println!("tail fit over n in {:?}: slope {}, R2 {}", f.range, fmt_f(f.slope), fmt_f(f.r2)),
                None => println!("tail fit unavailable"),
            }
            sink.report();
            if exhausted {
                return Err(Error::DepthExhausted { remaining: part.remaining }.into());
            }
        }
        EscapeCmd::Proportion => {
            let r0 = build_r0(&p)?;
            let gamma = annulus_seed(&r0, c.delta, 1e-6).ok_or(Error::NoTangency)?;
            let est = leaf_intersection_proportion(&p, &r0, &gamma, cfg.t_max, cfg.samples);
            let mut sink = Sink::new(cfg, "escape proportion")?;
            sink.csv("proportion.csv", &["samples", "survivors", "proportion", "T"], [row([est.samples.into(), est.survivors.into(), est.proportion.into(), est.t_max.into()])])?;
            println!("{} of {} samples survive T = {}: proportion {}", est.survivors, est.samples, est.t_max, fmt_f(est.proportion));
            sink.report();
        }
        EscapeCmd::Omega => {
            let r0 = build_r0(&p)?;
            let regions = build_critical_regions(&p, &r0, cfg.k_max)?;
            let boxes = CloseReturnBoxes { p: &p, r0: &r0, regions: &regions, delta: c.delta, tol: 0.0 };
            let rep = omega_ratio(&boxes, cfg.k0, cfg.samples, cfg.k_levels, cfg.t_max, cfg.seed);
            let mut sink = Sink::new(cfg, "escape omega")?;
            sink.csv("omega.csv", &["k", "pool", "hits", "ratio", "ci_lo", "ci_hi", "starved"], rep.estimates.iter().map(|e| {
                row([e.k.into(), e.pool.into(), e.hits.into(), e.ratio.into(), e.ci_lo.into(), e.ci_hi.into(), e.starved.into()])
            }))?;
            sink.json("omega.json", &rep)?;
            for e in &rep.estimates {
                println!("k {}: ratio {} [{}, {}]", e.k, fmt_f(e.ratio), fmt_f(e.ci_lo), fmt_f(e.ci_hi));
            }
            println!("{} logs checked, {} law violations", rep.logs_checked, rep.law_violations);
            sink.report();
        }
        EscapeCmd::Transitivity => {
            let rep = transitivity_witness(&p, cfg.arc_budget)?;
            let mut sink = Sink::new(cfg, "escape transitivity")?;
            sink.csv("transitivity.csv", &["x", "y", "angle"], rep.transverse.iter().map(|h| row([h.point.x.into(), h.point.y.into(), h.angle.into()])))?;
            sink.json("transitivity.json", &rep)?;
            let best = rep.transverse.iter().map(|h| h.angle).fold(0.0, f64::max);
            println!("{} transverse homoclinic points, largest angle {}", rep.transverse.len(), fmt_f(best));
            sink.report();
            if rep.applicable && best < MIN_CROSSING_ANGLE {
                return Err(CliError::Failed("no transverse homoclinic point above the angle threshold".into()));
            }
        }
    }
    Ok(())
}

pub fn check(cfg: &RunConfig, auto: bool) -> Res {
    let p = cfg.params();
    let c = cfg.constants();
    let mut results: Vec<(&str, bool, String)> = Vec::new();
    match find_fixed_points(&p) {
        Ok((ps, qs)) => {
            let r = (apply(&p, ps.location) - ps.location).norm().max((apply(&p, qs.location) - qs.location).norm());
            results.push(("fixed points", r <= 1e-12, format!("residual {}", fmt_f(r))));
            let saddle = ps.lambda_u.abs() > 1.0 && qs.lambda_u.abs() > 1.0 && ps.lambda_s.abs() < 1.0 && qs.lambda_s.abs() < 1.0;
            results.push(("saddle type", saddle || p.is_degenerate(), format!("|lambda_u| {} {}", fmt_f(ps.lambda_u.abs()), fmt_f(qs.lambda_u.abs()))));
        }
        Err(e) => results.push(("fixed points", false, e.to_string())),
    }
    match build_r0(&p) {
        Ok(r0) => {
            let n = r0.grid(16).len();
            results.push(("R0 built", n > 0, format!("{n} of 256 grid points inside")));
        }
        Err(e) => results.push(("R0 built", false, e.to_string())),
    }
    // D_k ratio on a geometric history, where D_{k+1}/D_k = e^{-3α}/r exactly
    let logs: Vec<f64> = (0..200).map(|i| i as f64 * 4f64.ln()).collect();
    let m = (3.0 * c.c0.ln() / c.alpha).ceil() as usize + 4;
    let ok = (m.min(190)..198).all(|k| compte_ratio_holds(compute_dk_from_logs(&logs, k, c.alpha), compute_dk_from_logs(&logs, k + 1, c.alpha), k, c.alpha));
    results.push(("D_k ratio", ok, format!("k from {}", m.min(190))));
    match need_a_star(cfg, auto) {
        Ok(a_star) if cfg.b > 0.0 && cfg.orientation == Orientation::Preserving => match find_a_star_star(cfg.b, a_star) {
            Ok((a2, _, _)) => results.push(("a** < a*", a2 < a_star, format!("a** {} a* {}", fmt_f(a2), fmt_f(a_star)))),
            Err(e) => results.push(("a** < a*", false, e.to_string())),
        },
        Ok(_) => {}
        Err(_) => println!("a* not located: ordering check skipped"),
    }
    let mut sink = Sink::new(cfg, "check")?;
    for (name, pass, detail) in &results {
        println!("{}: {} ({detail})", name, if *pass { "PASS" } else { "FAIL" });
    }
    sink.csv("check.csv", &["check", "pass", "detail"], results.iter().map(|(n, p, d)| row([(*n).into(), (*p).into(), d.clone().into()])))?;
    sink.report();
    if results.iter().all(|r| r.1) {
        Ok(())
    } else {
        Err(CliError::Failed("invariant check failed".into()))
    }
}
