use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use gffdisc::experiments::{run, write_report, Experiment, ExperimentConfig, Format};
use gffdisc::experiments::{to_csv, to_json};
use gffdisc::Error;

/// Lattice potential theory, Gaussian free field sampling and level-set
/// disconnection experiments on Z^d.
#[derive(Parser)]
#[command(name = "gffdisc", version, allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Green function g(x) against its far-field asymptotic
    Green,
    /// Capacity of centered cubes B_r
    Cap,
    /// Free-field samples on a window, with a field snapshot
    Sample,
    /// Markov decomposition φ = h + ψ on U = B_r
    Decompose,
    /// P[A_N] over a level grid from common samples
    Disconnect,
    /// Contour upper bound on P[A_N] for α < 0
    ContourBound,
    /// Change-of-measure lower bound on log P[A_N]
    TiltLowerbound,
    /// Exact and sampled variance of Z_f over a K grid
    Zfield,
    /// Bad-column census, or path check on good boxes (--mode paths)
    CoarseGrain,
    /// Vacant-set disconnection, or the occupation law at 0 (--mode vacancy)
    Interlace,
    /// Disconnection by one random walk over guard factors
    Srw,
    /// Exponential rate formulas over a level grid
    Rates,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::Green => Experiment::Green,
            Command::Cap => Experiment::Cap,
            Command::Sample => Experiment::Sample,
            Command::Decompose => Experiment::Decompose,
            Command::Disconnect => Experiment::Disconnect,
            Command::ContourBound => Experiment::ContourBound,
            Command::TiltLowerbound => Experiment::TiltLowerbound,
            Command::Zfield => Experiment::Zfield,
            Command::CoarseGrain => Experiment::CoarseGrain,
            Command::Interlace => Experiment::Interlace,
            Command::Srw => Experiment::Srw,
            Command::Rates => Experiment::Rates,
        }
    }
}

#[derive(Args)]
struct Opts {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it the table goes to stdout
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true, value_parser = ["csv", "json", "both"])]
    format: Option<String>,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long = "N", global = true)]
    n: Option<i64>,
    #[arg(long = "M", global = true)]
    m: Option<f64>,
    #[arg(long = "L", global = true)]
    l: Option<i64>,
    #[arg(long = "K", global = true)]
    k: Option<i64>,
    #[arg(long = "K-grid", global = true, value_delimiter = ',')]
    k_grid: Option<Vec<i64>>,
    #[arg(long = "alpha", global = true, allow_hyphen_values = true, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long = "u", global = true, value_delimiter = ',')]
    us: Option<Vec<f64>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true, value_parser = ["nearest", "star"])]
    connectivity: Option<String>,
    /// Cube radii, comma separated
    #[arg(long = "box", global = true, value_delimiter = ',')]
    boxes: Option<Vec<i64>>,
    /// A lattice point such as 25,0,0; repeatable
    #[arg(long = "point", global = true, allow_hyphen_values = true)]
    points: Vec<String>,
    #[arg(long, global = true)]
    n_mc: Option<u64>,
    #[arg(long, global = true)]
    guard_factor: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    guard_factors: Option<Vec<f64>>,
    #[arg(long, global = true)]
    window: Option<i64>,
    #[arg(long, global = true)]
    u_radius: Option<i64>,
    #[arg(long, global = true)]
    dirichlet_r: Option<i64>,
    #[arg(long, global = true)]
    sites: Option<usize>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true, value_parser = ["default", "paths", "vacancy"])]
    mode: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    plateau: Option<f64>,
    #[arg(long, global = true)]
    inner: Option<f64>,
    #[arg(long, global = true)]
    rate: Option<String>,
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    u_star: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    cap_ns: Option<Vec<i64>>,
    #[arg(long, global = true)]
    dense_limit: Option<usize>,
    /// Any config key as KEY=JSON, e.g. --set alphas=[-1,0]; repeatable
    #[arg(long = "set", global = true, allow_hyphen_values = true)]
    set: Vec<String>,
}

fn put<T: serde::Serialize>(m: &mut Map<String, Value>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        m.insert(key.into(), json!(v));
    }
}

impl Opts {
    fn overrides(&self) -> Result<Map<String, Value>, Vec<String>> {
        let mut m = Map::new();
        let mut errs = Vec::new();
        put(&mut m, "seed", &self.seed);
        put(&mut m, "out", &self.out);
        put(&mut m, "format", &self.format);
        put(&mut m, "d", &self.d);
        put(&mut m, "N", &self.n);
        put(&mut m, "M", &self.m);
        put(&mut m, "L", &self.l);
        put(&mut m, "K", &self.k);
        put(&mut m, "K_grid", &self.k_grid);
        put(&mut m, "alphas", &self.alphas);
        put(&mut m, "us", &self.us);
        put(&mut m, "gamma", &self.gamma);
        put(&mut m, "delta", &self.delta);
        put(&mut m, "a", &self.a);
        put(&mut m, "connectivity", &self.connectivity);
        put(&mut m, "boxes", &self.boxes);
        put(&mut m, "n_mc", &self.n_mc);
        put(&mut m, "guard_factor", &self.guard_factor);
        put(&mut m, "guard_factors", &self.guard_factors);
        put(&mut m, "window", &self.window);
        put(&mut m, "u_radius", &self.u_radius);
        put(&mut m, "dirichlet_r", &self.dirichlet_r);
        put(&mut m, "sites", &self.sites);
        put(&mut m, "grid", &self.grid);
        put(&mut m, "mode", &self.mode);
        put(&mut m, "plateau", &self.plateau);
        put(&mut m, "inner", &self.inner);
        put(&mut m, "rate", &self.rate);
        put(&mut m, "h", &self.h);
        put(&mut m, "u_star", &self.u_star);
        put(&mut m, "cap_ns", &self.cap_ns);
        put(&mut m, "dense_limit", &self.dense_limit);
        if !self.points.is_empty() {
            let mut pts = Vec::new();
            for p in &self.points {
                match p.split(',').map(|c| c.trim().parse::<i64>()).collect::<Result<Vec<_>, _>>() {
                    Ok(v) => pts.push(v),
                    Err(_) => errs.push(format!("--point {p}: expected comma-separated integers")),
                }
            }
            m.insert("points".into(), json!(pts));
        }
        for s in &self.set {
            match s.split_once('=') {
                Some((k, v)) => {
                    let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
                    m.insert(k.trim().to_string(), v);
                }
                None => errs.push(format!("--set {s}: expected KEY=VALUE")),
            }
        }
        if errs.is_empty() {
            Ok(m)
        } else {
            Err(errs)
        }
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidArgument(_)
        | Error::Domain(_)
        | Error::UnsupportedDimension(_)
        | Error::SizeLimit(_) => EXIT_VALIDATION,
        Error::IllConditioned(_) | Error::Io(_) | Error::Format(_) => EXIT_RUNTIME,
    }
}

fn read_config(path: &Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(vec![format!("cannot read config {}: {e}", path.display())]))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(vec![format!("config {} is not JSON: {e}", path.display())]))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let experiment = cli.command.experiment();
    let overrides = cli.opts.overrides().map_err(Error::Validation)?;
    let file = cli.opts.config.as_deref().map(read_config).transpose()?;
    let cfg = ExperimentConfig::layered(experiment, file, &overrides)?;
    if let Some(t) = cli.opts.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let report = run(&cfg)?;
    let p = &report.provenance;
    match &cfg.out {
        Some(dir) => {
            for path in write_report(&report, Path::new(dir), cfg.format)? {
                println!("wrote {}", path.display());
            }
        }
        None => {
            let bytes = match cfg.format {
                Format::Json => to_json(&report.rows)?,
                _ => to_csv(&report.rows)?,
            };
            std::io::stdout().write_all(&bytes)?;
        }
    }
    eprintln!(
        "# gffdisc {} {} config_hash={} threads={} wall_time_s={:.3}",
        p.gffdisc_version, p.experiment, p.config_hash, p.threads, p.wall_time_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
