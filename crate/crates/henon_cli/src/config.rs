use std::fmt;
use std::path::{Path, PathBuf};

use henon_bif::map_core::Constants;
use henon_bif::{FamilyParams, Orientation};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every knob of a run. `out` and `jobs` only say where and how fast, so they are not part of the
/// embedded config and never change an output byte.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub a: f64,
    pub b: f64,
    pub orientation: Orientation,
    pub alpha: f64,
    pub m: usize,
    pub delta: f64,
    pub lambda0: f64,
    pub seed: u64,
    pub grid: usize,
    pub t_max: usize,
    pub depth: usize,
    pub eps: Vec<f64>,
    pub samples: usize,
    pub k0: usize,
    pub k_levels: usize,
    pub k_max: usize,
    pub order: usize,
    pub n_max: usize,
    pub arc_budget: f64,
    pub x: f64,
    pub y: f64,
    pub steps: usize,
    pub leaves: usize,
    pub sweep_grid: usize,
    pub sweep_t: usize,
    pub sweep_threshold: f64,
    pub a_star: Option<f64>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            a: 2.0,
            b: 1e-4,
            orientation: Orientation::Preserving,
            alpha: Constants::DEFAULT_ALPHA,
            m: Constants::DEFAULT_M,
            delta: Constants::DEFAULT_DELTA,
            lambda0: Constants::DEFAULT_LAMBDA0,
            seed: 1,
            grid: 512,
            t_max: 10_000,
            depth: 12,
            eps: vec![1e-2, 1e-3, 1e-4],
            samples: 200,
            k0: 2,
            k_levels: 3,
            k_max: 6,
            order: 10,
            n_max: 10,
            arc_budget: 6.0,
            x: 0.1,
            y: 0.0,
            steps: 200,
            leaves: 50,
            sweep_grid: 40,
            sweep_t: 10_000,
            sweep_threshold: 0.99,
            a_star: None,
            out: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "a",
    "b",
    "orientation",
    "alpha",
    "M",
    "delta",
    "lambda0",
    "seed",
    "grid",
    "T",
    "depth",
    "eps",
    "samples",
    "k0",
    "k_levels",
    "k_max",
    "order",
    "n_max",
    "arc_budget",
    "x",
    "y",
    "steps",
    "leaves",
    "sweep_grid",
    "sweep_T",
    "sweep_threshold",
    "a_star",
    "out",
    "jobs",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("invalid value '{v}' for {key}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "a" => self.a = num(key, v)?,
            "b" => self.b = num(key, v)?,
            "orientation" => self.orientation = v.parse().map_err(|e: henon_bif::Error| e.to_string())?,
            "alpha" => self.alpha = num(key, v)?,
            "M" | "m" => self.m = num(key, v)?,
            "delta" => self.delta = num(key, v)?,
            "lambda0" => self.lambda0 = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "grid" => self.grid = num(key, v)?,
            "T" | "t_max" => self.t_max = num(key, v)?,
            "depth" => self.depth = num(key, v)?,
            "eps" => {
                self.eps = v.split(',').map(|e| num::<f64>(key, e.trim())).collect::<Result<_, _>>()?;
            }
            "samples" => self.samples = num(key, v)?,
            "k0" => self.k0 = num(key, v)?,
            "k_levels" => self.k_levels = num(key, v)?,
            "k_max" => self.k_max = num(key, v)?,
            "order" => self.order = num(key, v)?,
            "n_max" => self.n_max = num(key, v)?,
            "arc_budget" => self.arc_budget = num(key, v)?,
            "x" => self.x = num(key, v)?,
            "y" => self.y = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "leaves" => self.leaves = num(key, v)?,
            "sweep_grid" => self.sweep_grid = num(key, v)?,
            "sweep_T" => self.sweep_t = num(key, v)?,
            "sweep_threshold" => self.sweep_threshold = num(key, v)?,
            "a_star" => self.a_star = Some(num(key, v)?),
            "out" => self.out = PathBuf::from(v),
            "jobs" => self.jobs = num(key, v)?,
            _ => return Err(format!("unknown key '{key}' (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    /// key = value lines; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError(format!("{origin}:{}: expected key = value, got '{line}'", i + 1)));
            };
            self.set(k.trim(), v).map_err(|e| ConfigError(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    /// Defaults, then the file, then flags.
    pub fn resolve(file: Option<&Path>, flags: &[(&str, String)]) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        for (k, v) in flags {
            cfg.set(k, v).map_err(|e| ConfigError(format!("--{k}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = |m: String| ConfigError(m);
        self.params().validate().map_err(|x| e(x.to_string()))?;
        self.constants().validate().map_err(|x| e(x.to_string()))?;
        henon_bif::sweep::validate_ladder(&self.eps).map_err(|x| e(format!("eps: {x}")))?;
        for (name, v) in [("grid", self.grid), ("T", self.t_max), ("samples", self.samples), ("order", self.order), ("n_max", self.n_max)] {
            if v == 0 {
                return Err(e(format!("{name} must be positive")));
            }
        }
        if !(self.arc_budget > 0.0) {
            return Err(e("arc_budget must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sweep_threshold) {
            return Err(e("sweep_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> FamilyParams {
        FamilyParams::new(self.a, self.b, self.orientation)
    }

    pub fn params_at(&self, a: f64) -> FamilyParams {
        FamilyParams::new(a, self.b, self.orientation)
    }

    pub fn constants(&self) -> Constants {
        Constants::build(&self.params(), self.alpha, self.m, self.delta, self.lambda0)
    }

    /// The resolved config as sorted key = value pairs, floats in round-trip form.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let o = match self.orientation {
            Orientation::Preserving => "preserving",
            Orientation::Reversing => "reversing",
        };
        let eps: Vec<String> = self.eps.iter().map(|e| format!("{e:?}")).collect();
        vec![
            ("a", format!("{:?}", self.a)),
            ("b", format!("{:?}", self.b)),
            ("orientation", o.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("M", self.m.to_string()),
            ("delta", format!("{:?}", self.delta)),
            ("lambda0", format!("{:?}", self.lambda0)),
            ("seed", self.seed.to_string()),
            ("grid", self.grid.to_string()),
            ("T", self.t_max.to_string()),
            ("depth", self.depth.to_string()),
            ("eps", eps.join(",")),
            ("samples", self.samples.to_string()),
            ("k0", self.k0.to_string()),
            ("k_levels", self.k_levels.to_string()),
            ("k_max", self.k_max.to_string()),
            ("order", self.order.to_string()),
            ("n_max", self.n_max.to_string()),
            ("arc_budget", format!("{:?}", self.arc_budget)),
            ("x", format!("{:?}", self.x)),
            ("y", format!("{:?}", self.y)),
            ("steps", self.steps.to_string()),
            ("leaves", self.leaves.to_string()),
            ("sweep_grid", self.sweep_grid.to_string()),
            ("sweep_T", self.sweep_t.to_string()),
            ("sweep_threshold", format!("{:?}", self.sweep_threshold)),
            ("a_star", self.a_star.map_or("none".into(), |v| format!("{v:?}"))),
        ]
    }
}
