//! `osgood-lab`: configuration-driven experiments and audit reports.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser};

use config::*;
use report::{Manifest, Timing};

/// Ways a run can end other than success.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Parse(String),
    Validation(String),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn status(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Parse(m) => write!(f, "parse error: {m}"),
            Failure::Validation(m) => write!(f, "invalid configuration: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "osgood-lab", version, about = "Audits for transport by Osgood fields and 2D Euler stability")]
struct Cli {
    /// TOML configuration; command-line flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV files and manifest.json
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Osgood integrals, R, R⁻¹ and propagated moduli
    Modulus(ModulusArgs),
    /// Cell cascade series conditions
    Acm(AcmArgs),
    /// Trajectories, separation audit and transport
    Flow(FlowArgs),
    /// Log-interpolation inequality on random band-limited fields
    Interp(InterpArgs),
    /// Pseudo-spectral Euler: conservation or twin-run stability
    Euler(EulerArgs),
}

#[derive(Args, Debug, Default)]
struct ModulusArgs {
    #[arg(long, value_enum)]
    kind: Option<ModulusChoice>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta_m: Option<u32>,
    #[arg(long, value_enum)]
    check: Option<ModulusCheck>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    js: Option<Vec<f64>>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct AcmArgs {
    /// log1, log2 or log3
    #[arg(long)]
    theta: Option<String>,
    #[arg(long = "N", alias = "n-cells")]
    n_cells: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum)]
    condition: Option<ConditionChoice>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    constant: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct FlowArgs {
    #[arg(long, value_enum)]
    field: Option<FieldChoice>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// modulus of the osgood field
    #[arg(long, value_enum)]
    kind: Option<ModulusChoice>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    transport_n: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct InterpArgs {
    #[arg(long)]
    fields: Option<usize>,
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    max_ratio: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct EulerArgs {
    #[arg(long, value_enum)]
    mode: Option<EulerMode>,
    #[arg(long)]
    n_grid: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    theta_n: Option<u32>,
    #[arg(long)]
    outputs: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Command {
    fn subcommand(&self) -> Subcommand {
        match self {
            Command::Modulus(_) => Subcommand::Modulus,
            Command::Acm(_) => Subcommand::Acm,
            Command::Flow(_) => Subcommand::Flow,
            Command::Interp(_) => Subcommand::Interp,
            Command::Euler(_) => Subcommand::Euler,
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig) {
        cfg.subcommand = Some(self.subcommand());
        match self {
            Command::Modulus(a) => {
                let m = &mut cfg.modulus;
                set(&mut m.kind, a.kind);
                set(&mut m.n, a.n);
                set(&mut m.alpha, a.alpha);
                set(&mut m.theta_m, a.theta_m);
                set(&mut m.check, a.check);
                set(&mut m.points, a.points);
                set(&mut m.r_min, a.r_min);
                set(&mut m.js, a.js);
                set(&mut m.tol, a.tol);
            }
            Command::Acm(a) => {
                let m = &mut cfg.acm;
                set(&mut m.theta, a.theta);
                set(&mut m.n_cells, a.n_cells);
                set(&mut m.d, a.d);
                set(&mut m.sigma, a.sigma);
                set(&mut m.condition, a.condition);
                set(&mut m.p, a.p);
                set(&mut m.constant, a.constant);
                set(&mut m.s, a.s);
                set(&mut m.t, a.t);
                set(&mut m.c, a.c);
            }
            Command::Flow(a) => {
                let m = &mut cfg.flow;
                set(&mut m.field, a.field);
                set(&mut m.amplitude, a.amplitude);
                set(&mut m.modulus.kind, a.kind);
                set(&mut m.t_final, a.t_final);
                set(&mut m.tol, a.tol);
                set(&mut m.pairs, a.pairs);
                set(&mut m.transport_n, a.transport_n);
            }
            Command::Interp(a) => {
                let m = &mut cfg.interp;
                set(&mut m.fields, a.fields);
                set(&mut m.n_grid, a.n_grid);
                set(&mut m.kmax, a.kmax);
                set(&mut m.epsilons, a.epsilons);
                set(&mut m.max_ratio, a.max_ratio);
            }
            Command::Euler(a) => {
                let m = &mut cfg.euler;
                set(&mut m.mode, a.mode);
                set(&mut m.n_grid, a.n_grid);
                set(&mut m.t_end, a.t_end);
                set(&mut m.dt, a.dt);
                set(&mut m.deltas, a.deltas);
                set(&mut m.params.theta_n, a.theta_n);
                set(&mut m.params.outputs, a.outputs);
            }
        }
    }
}

fn resolve(cli: Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(cmd) = cli.command {
        cmd.apply(&mut cfg);
    }
    set(&mut cfg.out, cli.out);
    set(&mut cfg.seed, cli.seed);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    Ok(cfg)
}

/// Returns `Ok(true)` when every audit passed.
fn run(cli: Cli) -> Result<bool, Failure> {
    let cfg = resolve(cli)?;
    let sub = cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let outcome = experiments::run(sub, &cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    let timing = Timing { started_unix, wall_seconds: clock.elapsed().as_secs_f64() };
    let manifest = Manifest::new(sub, &cfg, &outcome, timing);
    report::emit(&cfg.out, &outcome, &manifest)?;
    for a in &manifest.audits {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    println!("wrote {} files to {}", manifest.outputs.len() + 1, cfg.out.display());
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("osgood-lab: {f}");
            ExitCode::from(f.status())
        }
    }
}
