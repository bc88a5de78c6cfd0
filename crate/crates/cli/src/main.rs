//! `superlyap`: command-line entry point for the certification, simulation
//! and control experiments.
//!
//! Exit codes: 0 success, 2 infeasible constants, 3 certification failed
//! (report files are still written), 64 bad flags or config, 70 runtime
//! fault.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::{Failure, Outcome};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use superlyap::Point;

#[derive(Parser)]
#[command(name = "superlyap", version, about = "Super-Lyapunov certification and stochastic experiments")]
struct Cli {
    /// JSON config (a bare config object or a previous output document).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving every output file.
    #[arg(long, global = true, env = "SUPERLYAP_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune constants, solve for g and certify the global function on a grid.
    Certify(CertifyArgs),
    /// Ensemble of tamed-Euler paths of the full system.
    Simulate(SimulateArgs),
    /// Monte-Carlo exit-time moment of the linear process against the BVP.
    ExitTime(ExitTimeArgs),
    /// Occupation histogram after burn-in.
    Invariant(InvariantArgs),
    /// Histogram total-variation proxy between two ensembles.
    Converge(ConvergeArgs),
    /// Synthesize a control path, its Jacobi flow and Gram matrix.
    Control(ControlArgs),
    /// Solve the boundary value problem for g and tabulate it.
    Bvp(BvpArgs),
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let x: f64 = a.trim().parse().map_err(|e| format!("bad x in `{s}`: {e}"))?;
    let y: f64 = b.trim().parse().map_err(|e| format!("bad y in `{s}`: {e}"))?;
    Ok(Point::new(x, y))
}

#[derive(Args, Serialize)]
struct CertifyArgs {
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    ctil1: Option<f64>,
    #[arg(long)]
    ctil2: Option<f64>,
    #[arg(long)]
    n_radial: Option<usize>,
    #[arg(long)]
    n_transverse: Option<usize>,
    #[arg(long)]
    outer_factor: Option<f64>,
    #[arg(long)]
    disk_radial: Option<usize>,
    #[arg(long)]
    disk_angular: Option<usize>,
    #[arg(long)]
    m_safety: Option<f64>,
    #[arg(long)]
    refinement_check: Option<bool>,
    #[arg(long)]
    refinement_tolerance: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum SchemeArg {
    #[serde(rename = "Tamed")]
    Tamed,
    #[serde(rename = "PlainEuler")]
    PlainEuler,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    /// Start `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    z0: Option<Point>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma-separated report times.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    adaptive: Option<bool>,
    #[arg(long)]
    escape_radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_paths: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
}

#[derive(Args, Serialize)]
struct ExitTimeArgs {
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h_max: Option<f64>,
    #[arg(long)]
    h_min: Option<f64>,
    #[arg(long)]
    safety_sigmas: Option<f64>,
    #[arg(long)]
    time_cap: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    tail_s: Option<Vec<f64>>,
}

#[derive(Args, Serialize)]
struct InvariantArgs {
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    z0: Option<Point>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    window_half: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    coarse_factor: Option<usize>,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct ConvergeArgs {
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    from_a: Option<Point>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    from_b: Option<Point>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    window_half: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    n_bootstrap: Option<usize>,
    #[arg(long)]
    min_bin_count: Option<f64>,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    seed_a: Option<u64>,
    #[arg(long)]
    seed_b: Option<u64>,
    #[arg(long)]
    bootstrap_seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Serialize)]
struct ControlArgs {
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    from: Option<Point>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    to: Option<Point>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    m_push: Option<f64>,
    #[arg(long)]
    fine_step: Option<f64>,
    #[arg(long)]
    event_horizon: Option<f64>,
    #[arg(long)]
    gram_nodes: Option<usize>,
    #[arg(long)]
    record_every: Option<usize>,
}

#[derive(Args, Serialize)]
struct BvpArgs {
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    sigma_y: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

fn load(path: Option<&Path>) -> Result<Option<serde_json::Value>, Failure> {
    let Some(p) = path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(p).map_err(|e| Failure::Schema(format!("cannot read {}: {e}", p.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| Failure::Schema(format!("{} is not valid JSON: {e}", p.display())))
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Schema("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    let file = load(cli.config.as_deref())?;
    let out = cli.out_dir.as_path();
    macro_rules! resolved {
        ($name:literal, $args:expr) => {
            config::resolve(file, $name, $args).map_err(Failure::Schema)?
        };
    }
    match &cli.command {
        Command::Certify(a) => commands::certify(&resolved!("certify", a), out),
        Command::Simulate(a) => commands::simulate(&resolved!("simulate", a), out),
        Command::ExitTime(a) => commands::exit_time(&resolved!("exit-time", a), out),
        Command::Invariant(a) => commands::invariant(&resolved!("invariant", a), out),
        Command::Converge(a) => commands::converge(&resolved!("converge", a), out),
        Command::Control(a) => commands::control(&resolved!("control", a), out),
        Command::Bvp(a) => commands::bvp(&resolved!("bvp", a), out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Uncertified) => {
            eprintln!("error: certification failed; report written");
            ExitCode::from(3)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
