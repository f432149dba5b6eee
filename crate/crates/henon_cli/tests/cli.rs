use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn henon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_henon")).args(args).arg("--out").arg(dir).output().expect("spawn henon")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstdout {}\nstderr {}", o.status, String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

/// Data rows of a CSV written by the tool: comment lines skipped, header split off.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn fixed_points_match_quadratic_roots() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["fixed-points", "--a", "1.4", "--b", "0.0004"]));
    let (h, rows) = table(&dir.path().join("fixed_points.csv"));
    assert_eq!(rows.len(), 2);
    // x = 1 − a x² − b x with y = −√b x
    let (a, b) = (1.4f64, 0.0004f64);
    let d = ((1.0 + b) * (1.0 + b) + 4.0 * a).sqrt();
    let expect = [(d - (1.0 + b)) / (2.0 * a), (-d - (1.0 + b)) / (2.0 * a)];
    for (r, x) in rows.iter().zip(expect) {
        let got: f64 = r[col(&h, "x")].parse().unwrap();
        let y: f64 = r[col(&h, "y")].parse().unwrap();
        assert!((got - x).abs() < 1e-14, "{got} vs {x}");
        assert!((y + b.sqrt() * x).abs() < 1e-15);
    }
    let text = fs::read_to_string(dir.path().join("fixed_points.csv")).unwrap();
    assert!(text.starts_with("# henon "));
    assert!(text.contains("# a = 1.4\n") && text.contains("# b = 0.0004\n"));
}

#[test]
fn degenerate_mode_annotates_one_dimensional_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = henon(dir.path(), &["fixed-points", "--b", "0"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("degenerate mode"));
    let (h, rows) = table(&dir.path().join("fixed_points.csv"));
    for r in &rows {
        let x: f64 = r[col(&h, "x")].parse().unwrap();
        let oracle: f64 = r[col(&h, "oracle_x")].parse().unwrap();
        assert_eq!(x, oracle);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r[col(&h, "x")].parse().unwrap()).collect();
    assert_eq!(xs, vec![0.5, -1.0]);
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["fixed-points"]));
    let (h, rows) = table(&dir.path().join("fixed_points.csv"));
    let cell = &rows[0][col(&h, "lambda_u")];
    let mantissa: String = cell.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn malformed_config_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "a = 2\nb = 1e-4\nthis line is wrong\n").unwrap();
    let o = henon(dir.path(), &["fixed-points", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.cfg:3:"));
    fs::write(&cfg, "a = 2\nsamples = lots\n").unwrap();
    let o = henon(dir.path(), &["fixed-points", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains(":2:") && err.contains("samples"), "{err}");
}

#[test]
fn out_of_range_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(henon(dir.path(), &["fixed-points", "--b", "0.5"]).status.code(), Some(2));
    assert_eq!(henon(dir.path(), &["fixed-points", "--delta", "-1"]).status.code(), Some(2));
    assert_eq!(henon(dir.path(), &["fixed-points", "--eps", "1e-3,1e-2"]).status.code(), Some(2));
    assert_eq!(henon(dir.path(), &["fixed-points", "--set", "nonsense=1"]).status.code(), Some(2));
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "a = 1.9\nseed = 7\n").unwrap();
    ok(&henon(dir.path(), &["fixed-points", "--config", cfg.to_str().unwrap(), "--a", "1.95"]));
    let text = fs::read_to_string(dir.path().join("fixed_points.csv")).unwrap();
    assert!(text.contains("# a = 1.95\n"));
    assert!(text.contains("# seed = 7\n"));
    assert!(text.contains("# b = 0.0001\n"));
}

#[test]
fn sweep_without_a_star_is_a_missing_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let o = henon(dir.path(), &["bifurcation", "sweep"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run find-astar first"));
}

#[test]
fn find_astar_then_sweep_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["bifurcation", "find-astar"]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("astar.json")).unwrap()).unwrap();
    let br = &v["result"]["a_star_bracket"];
    let width = br[1].as_f64().unwrap() - br[0].as_f64().unwrap();
    assert!(width > 0.0 && width <= 1e-10, "{width}");
    assert_eq!(v["config"]["b"], "0.0001");

    let args = ["bifurcation", "sweep", "--eps", "1e-2,1e-3", "--samples", "3", "--sweep-grid", "4", "--sweep-T", "50"];
    ok(&henon(dir.path(), &args));
    let (h, rows) = table(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][col(&h, "samples")], "3");
    let first = fs::read(dir.path().join("sweep.csv")).unwrap();
    let o = henon(dir.path(), &args);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("resuming"));
    assert_eq!(fs::read(dir.path().join("sweep.csv")).unwrap(), first);
}

#[test]
fn auto_runs_the_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["bifurcation", "sweep", "--auto", "--eps", "1e-2", "--samples", "1", "--sweep-grid", "4", "--sweep-T", "50"]));
    assert!(dir.path().join("astar.json").exists());
    assert!(dir.path().join("sweep.svg").exists());
}

#[test]
fn horseshoe_grid_empties_quickly() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["escape", "grid", "--a", "2.5", "--grid", "512", "--T", "100"]));
    let (h, rows) = table(&dir.path().join("survival.csv"));
    assert_eq!(rows.len(), 101);
    let f: Vec<f64> = rows.iter().map(|r| r[col(&h, "fraction")].parse().unwrap()).collect();
    assert_eq!(f[0], 1.0);
    assert!(f.windows(2).all(|w| w[1] <= w[0]));
    assert!(*f.last().unwrap() <= 1e-3);
}

#[test]
fn outputs_are_deterministic_across_dirs_and_workers() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let args = ["escape", "grid", "--grid", "24", "--T", "300"];
    ok(&henon(d1.path(), &args));
    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "1"]);
    ok(&henon(d2.path(), &with_jobs));
    for f in ["survival.csv", "survival.svg"] {
        assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn segment_writes_tail_and_reports_exhaustion() {
    let dir = tempfile::tempdir().unwrap();
    // at a = 2.5 the seed leaves R0 at once: one element with S = 0
    ok(&henon(dir.path(), &["escape", "segment", "--a", "2.5", "--depth", "4"]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stopping.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["elements"], 1);
    let (_, rows) = table(&dir.path().join("stopping_tail.csv"));
    assert_eq!(rows.len(), 5);
    // at the default parameter the tail decays slowly: files written, exit 4
    let o = henon(dir.path(), &["escape", "segment", "--depth", "6"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("remaining mass"));
    assert!(dir.path().join("stopping_tail.csv").exists());
}

#[test]
fn region_and_manifold_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["region"]));
    ok(&henon(dir.path(), &["manifold", "--arc-budget", "2"]));
    for f in ["region.csv", "region.json", "region.svg", "manifold.csv", "manifold.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let svg = fs::read_to_string(dir.path().join("region.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("a = 2.0"));
}

#[test]
fn transitivity_finds_a_transverse_point() {
    let dir = tempfile::tempdir().unwrap();
    ok(&henon(dir.path(), &["escape", "transitivity"]));
    let (_, rows) = table(&dir.path().join("transitivity.csv"));
    assert!(!rows.is_empty());
}

#[test]
fn check_passes_at_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = henon(dir.path(), &["check"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("fixed points: PASS"));
}
