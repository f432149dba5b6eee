mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "henon", version, about = "Hénon-like maps near the first homoclinic bifurcation")]
struct Cli {
    #[command(flatten)]
    knobs: Knobs,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Config overrides. Every flag also exists as a key of the config file; flags win.
#[derive(Args)]
struct Knobs {
    /// key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra key=value override, repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (0 = all cores); never changes results
    #[arg(long, global = true)]
    jobs: Option<String>,
    /// Compute missing prerequisites instead of failing
    #[arg(long, global = true)]
    auto: bool,
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, global = true)]
    b: Option<String>,
    #[arg(long, global = true)]
    orientation: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long = "M", global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    delta: Option<String>,
    #[arg(long, global = true)]
    lambda0: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Horizon
    #[arg(long = "T", global = true)]
    t: Option<String>,
    #[arg(long, global = true)]
    depth: Option<String>,
    /// Comma-separated, strictly decreasing
    #[arg(long, global = true)]
    eps: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true)]
    k0: Option<String>,
    #[arg(long = "k-levels", global = true)]
    k_levels: Option<String>,
    #[arg(long = "k-max", global = true)]
    k_max: Option<String>,
    /// Order of critical approximations
    #[arg(long, global = true)]
    order: Option<String>,
    #[arg(long = "n-max", global = true)]
    n_max: Option<String>,
    #[arg(long = "arc-budget", global = true)]
    arc_budget: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    y: Option<String>,
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    leaves: Option<String>,
    #[arg(long = "sweep-grid", global = true)]
    sweep_grid: Option<String>,
    #[arg(long = "sweep-T", global = true)]
    sweep_t: Option<String>,
    #[arg(long = "sweep-threshold", global = true)]
    sweep_threshold: Option<String>,
    #[arg(long = "a-star", global = true)]
    a_star: Option<String>,
}

impl Knobs {
    fn pairs(&self) -> Result<Vec<(&str, String)>, CliError> {
        let mut out: Vec<(&str, String)> = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            out.push((k.trim(), v.to_string()));
        }
        let named = [
            ("out", &self.out),
            ("jobs", &self.jobs),
            ("a", &self.a),
            ("b", &self.b),
            ("orientation", &self.orientation),
            ("alpha", &self.alpha),
            ("M", &self.m),
            ("delta", &self.delta),
            ("lambda0", &self.lambda0),
            ("seed", &self.seed),
            ("grid", &self.grid),
            ("T", &self.t),
            ("depth", &self.depth),
            ("eps", &self.eps),
            ("samples", &self.samples),
            ("k0", &self.k0),
            ("k_levels", &self.k_levels),
            ("k_max", &self.k_max),
            ("order", &self.order),
            ("n_max", &self.n_max),
            ("arc_budget", &self.arc_budget),
            ("x", &self.x),
            ("y", &self.y),
            ("steps", &self.steps),
            ("leaves", &self.leaves),
            ("sweep_grid", &self.sweep_grid),
            ("sweep_T", &self.sweep_t),
            ("sweep_threshold", &self.sweep_threshold),
            ("a_star", &self.a_star),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        }
        Ok(out)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// The saddles P and Q with eigen-data
    FixedPoints,
    /// Unstable manifold of the boundary saddle and the local stable manifold of Q
    Manifold,
    /// The trapping region R0
    Region,
    /// Long stable leaves through points of the x-axis
    Leaves,
    /// Critical approximations, points, regions and partitions
    Critical {
        #[command(subcommand)]
        what: CriticalCmd,
    },
    /// Orbit tools
    Orbit {
        #[command(subcommand)]
        what: OrbitCmd,
    },
    /// Bifurcation parameters and the density sweep
    Bifurcation {
        #[command(subcommand)]
        what: BifurcationCmd,
    },
    /// Escape statistics
    Escape {
        #[command(subcommand)]
        what: EscapeCmd,
    },
    /// Run the invariant checks for the configured parameters
    Check,
}

#[derive(Subcommand)]
pub enum CriticalCmd {
    /// Critical approximation of the configured order on the inner fold host
    Approx,
    /// Critical point as the limit of approximations
    Point,
    /// Critical regions up to k_max
    Regions,
    /// Critical partition of the host of the critical point
    Partition,
}

#[derive(Subcommand)]
pub enum OrbitCmd {
    /// Bound/free decomposition of the orbit of (x, y)
    Decompose,
}

#[derive(Subcommand)]
pub enum BifurcationCmd {
    /// Locate a*, the last internal tangency
    FindAstar,
    /// Locate a**, where Wu(P) first leaves the box
    FindAstarstar,
    /// Good-fraction sweep over the eps ladder below a*
    Sweep,
}

#[derive(Subcommand)]
pub enum EscapeCmd {
    /// Survival curve of a grid in R0
    Grid,
    /// Stopping times on the seed segment across I(2δ)\I(δ)
    Segment,
    /// Proportion of the seed segment surviving T iterations
    Proportion,
    /// Close-return ratio experiment
    Omega,
    /// Transverse homoclinic points of Q
    Transitivity,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let pairs = cli.knobs.pairs()?;
    let cfg = RunConfig::resolve(cli.knobs.config.as_deref(), &pairs).map_err(|e| CliError::Config(e.0))?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let auto = cli.knobs.auto;
    match cli.cmd {
        Cmd::FixedPoints => commands::fixed_points(&cfg),
        Cmd::Manifold => commands::manifold(&cfg),
        Cmd::Region => commands::region(&cfg),
        Cmd::Leaves => commands::leaves(&cfg),
        Cmd::Critical { what } => commands::critical(&cfg, what),
        Cmd::Orbit { what: OrbitCmd::Decompose } => commands::orbit(&cfg),
        Cmd::Bifurcation { what } => commands::bifurcation(&cfg, what, auto),
        Cmd::Escape { what } => commands::escape(&cfg, what),
        Cmd::Check => commands::check(&cfg, auto),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
