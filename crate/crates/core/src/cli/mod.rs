//! Command-line front end.
//!
//! Settings resolve as defaults, then the `--config` file, then flags.
//! Every run writes `manifest.json` (resolved settings, version, wall time)
//! beside its data files. Exit codes: 0 success, 2 invalid configuration,
//! 1 numerical failure or a failed identity.

pub mod config;
pub mod identities;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::cartan::{CartanMatrix, CouplingParams};
use crate::error::{Error, Result};
use crate::functional::{normalize, MultiField};
use crate::grid::{GridSpec, ScalarField};
use crate::minimizer::{self, Init};
use crate::{bubbles, pohozaev, radial};

pub use config::{parse_config_text, parse_real, Command, InitChoice, RunConfig};

/// Version string baked in at build time, `git describe` style.
pub const VERSION: &str = env!("TODA_LAB_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "toda-lab", version = VERSION, about = "Toda system experiments on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Minimize the functional at one coupling.
    Minimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        descent: Descent,
        /// zero, random or bubble:<lambda>:<component>
        #[arg(long)]
        init: Option<String>,
    },
    /// Classify boundedness over a square grid of couplings.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        descent: Descent,
        /// Grid shape, e.g. 9x9
        #[arg(long)]
        m_grid: Option<String>,
        /// Coupling range lo:hi, e.g. 1pi:5pi
        #[arg(long)]
        range: Option<String>,
    },
    /// Fit the bubble family's energy terms against log λ.
    Bubble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long)]
        delta0: Option<String>,
    },
    /// Shoot one radial solution on the plane.
    Radial {
        #[command(flatten)]
        common: Common,
        /// Initial values u_j(0)
        #[arg(long, allow_hyphen_values = true)]
        a0: Option<String>,
        #[arg(long)]
        r_max: Option<String>,
        #[arg(long)]
        tol: Option<String>,
    },
    /// Local Pohozaev balance of a critical point, computed or read from disk.
    Pohozaev {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        descent: Descent,
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        radii: Option<String>,
        #[arg(long)]
        center: Option<String>,
        /// Comma-separated field files as written by `minimize`
        #[arg(long)]
        input: Option<String>,
    },
    /// Run the identity table.
    Identities {
        #[command(flatten)]
        common: Common,
        /// Only the bubble slope rows
        #[arg(long)]
        bubble_only: bool,
        #[arg(long, hide = true)]
        corrupt_cartan: bool,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key = value settings file
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    /// Couplings, e.g. 3pi,3pi
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct Descent {
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    grad_tol: Option<String>,
    #[arg(long)]
    step: Option<String>,
    #[arg(long)]
    divergence_energy_drop: Option<String>,
    #[arg(long)]
    concentration_radius: Option<String>,
    #[arg(long)]
    concentration_mass: Option<String>,
}

type Pairs = Vec<(&'static str, String)>;

fn push(pairs: &mut Pairs, key: &'static str, value: &Option<String>) {
    if let Some(v) = value {
        pairs.push((key, v.clone()));
    }
}

impl Common {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "n", &self.n);
        push(out, "rank", &self.rank);
        push(out, "m", &self.m);
        push(out, "seed", &self.seed);
        push(out, "out", &self.out);
    }
}

impl Descent {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "max_iters", &self.max_iters);
        push(out, "grad_tol", &self.grad_tol);
        push(out, "step", &self.step);
        push(out, "divergence_energy_drop", &self.divergence_energy_drop);
        push(out, "concentration_radius", &self.concentration_radius);
        push(out, "concentration_mass", &self.concentration_mass);
    }
}

struct Parsed {
    command: Command,
    config_file: Option<String>,
    flags: Pairs,
    corrupt_cartan: bool,
}

impl Sub {
    fn into_parsed(self) -> Parsed {
        let mut flags = Pairs::new();
        let mut corrupt_cartan = false;
        let (command, common) = match self {
            Sub::Minimize { common, descent, init } => {
                descent.pairs(&mut flags);
                push(&mut flags, "init", &init);
                (Command::Minimize, common)
            }
            Sub::Sweep {
                common,
                descent,
                m_grid,
                range,
            } => {
                descent.pairs(&mut flags);
                push(&mut flags, "m_grid", &m_grid);
                push(&mut flags, "range", &range);
                (Command::Sweep, common)
            }
            Sub::Bubble { common, lambdas, delta0 } => {
                push(&mut flags, "lambdas", &lambdas);
                push(&mut flags, "delta0", &delta0);
                (Command::Bubble, common)
            }
            Sub::Radial { common, a0, r_max, tol } => {
                push(&mut flags, "a0", &a0);
                push(&mut flags, "r_max", &r_max);
                push(&mut flags, "tol", &tol);
                (Command::Radial, common)
            }
            Sub::Pohozaev {
                common,
                descent,
                init,
                radii,
                center,
                input,
            } => {
                descent.pairs(&mut flags);
                push(&mut flags, "init", &init);
                push(&mut flags, "radii", &radii);
                push(&mut flags, "center", &center);
                push(&mut flags, "input", &input);
                (Command::Pohozaev, common)
            }
            Sub::Identities {
                common,
                bubble_only,
                corrupt_cartan: corrupt,
            } => {
                if bubble_only {
                    flags.push(("bubble_only", "true".into()));
                }
                corrupt_cartan = corrupt;
                (Command::Identities, common)
            }
        };
        // common flags go first so command flags cannot be shadowed by them
        let mut all = Pairs::new();
        common.pairs(&mut all);
        all.extend(flags);
        Parsed {
            command,
            config_file: common.config,
            flags: all,
            corrupt_cartan,
        }
    }
}

/// Resolves defaults, an optional config file and flag overrides, then
/// validates.
pub fn resolve(command: Command, config_text: Option<&str>, flags: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(text) = config_text {
        let pairs = parse_config_text(text)?;
        cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    }
    cfg.apply(flags.iter().map(|(k, v)| (*k, v.as_str())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let parsed = cli.command.into_parsed();
    let text = match &parsed.config_file {
        Some(path) => match fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read config {path}: {e}");
                return EXIT_INVALID;
            }
        },
        None => None,
    };
    let cfg = match resolve(parsed.command, text.as_deref(), &parsed.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", plain_message(&e));
            return EXIT_INVALID;
        }
    };
    let start = Instant::now();
    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("error: cannot create {}: {e}", cfg.out.display());
        return EXIT_FAILURE;
    }
    let outcome = execute(&cfg, parsed.corrupt_cartan);
    let manifest = write_manifest(&cfg, start.elapsed().as_secs_f64());
    match (outcome, manifest) {
        (Ok(code), Ok(())) => code,
        (Err(e), _) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
        (_, Err(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn plain_message(e: &Error) -> String {
    match e {
        Error::InvalidArgument(msg) => msg.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug)]
enum RunError {
    Numeric(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Numeric(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numeric(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Io(e.into())
    }
}

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::result::Result<(), RunError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, wall_time: f64) -> std::result::Result<(), RunError> {
    let finished = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = json!({
        "command": cfg.command.name(),
        "version": VERSION,
        "config": cfg.to_pairs(),
        "wall_time_seconds": wall_time,
        "finished_unix": finished,
    });
    write_json(&cfg.out, "manifest.json", &manifest)
}

fn execute(cfg: &RunConfig, corrupt_cartan: bool) -> std::result::Result<i32, RunError> {
    match cfg.command {
        Command::Minimize => run_minimize(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Bubble => run_bubble(cfg),
        Command::Radial => run_radial(cfg),
        Command::Pohozaev => run_pohozaev(cfg),
        Command::Identities => {
            let opts = identities::SuiteOptions {
                bubble_only: cfg.bubble_only,
                corrupt_cartan,
            };
            let table = identities::run_suite(&opts);
            let mut w = create(&cfg.out, "identities.csv")?;
            identities::write_csv(&table, &mut w)?;
            w.flush()?;
            write_json(&cfg.out, "report.json", &table)?;
            for row in &table {
                println!("{:<4} {} {}", if row.pass { "PASS" } else { "FAIL" }, row.identity, row.parameters);
            }
            Ok(if table.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

fn setup(cfg: &RunConfig) -> Result<(GridSpec, CartanMatrix, CouplingParams)> {
    Ok((
        GridSpec::new(cfg.n)?,
        CartanMatrix::su(cfg.rank)?,
        CouplingParams::new(cfg.couplings.clone())?,
    ))
}

fn initial(cfg: &RunConfig, spec: GridSpec) -> Result<Init> {
    Ok(match cfg.init.seed() {
        Some(seed) => Init::Field(minimizer::seed_field(seed, spec, cfg.rank)?),
        None => Init::Random,
    })
}

fn write_fields(dir: &Path, u: &MultiField) -> std::io::Result<()> {
    for (j, c) in u.components().iter().enumerate() {
        let mut w = create(dir, &format!("u{}.bin", j + 1))?;
        c.write_binary(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run_minimize(cfg: &RunConfig) -> std::result::Result<i32, RunError> {
    let (spec, k, m) = setup(cfg)?;
    let rep = minimizer::minimize(&m, &k, spec, initial(cfg, spec)?, &cfg.minimize)?;
    write_fields(&cfg.out, &rep.final_u)?;
    let report = json!({
        "couplings": m.values(),
        "n": cfg.n,
        "status": rep.status,
        "iterations": rep.iterations,
        "initial_energy": rep.initial_energy(),
        "final_energy": rep.final_energy(),
        "energy_drop": rep.energy_drop(),
        "grad_norm": rep.grad_norm,
        "el_residuals": rep.el_residuals,
        "max_field": rep.max_field,
        "concentration": rep.concentration,
        "energy_trace": rep.energy_trace,
    });
    write_json(&cfg.out, "report.json", &report)?;
    println!("{:?} after {} iterations, energy {}", rep.status, rep.iterations, rep.final_energy());
    Ok(EXIT_OK)
}

fn run_sweep(cfg: &RunConfig) -> std::result::Result<i32, RunError> {
    let spec = GridSpec::new(cfg.n)?;
    let k = CartanMatrix::su(cfg.rank)?;
    let points = minimizer::coupling_grid(cfg.m_grid, cfg.range.0, cfg.range.1)?;
    let results = minimizer::sweep(&points, &k, spec, &cfg.minimize)?;
    let mut w = create(&cfg.out, "region.csv")?;
    minimizer::write_region_csv(&results, &mut w)?;
    w.flush()?;
    write_json(&cfg.out, "report.json", &json!({ "n": cfg.n, "results": results }))?;
    println!("classified {} couplings", results.len());
    Ok(EXIT_OK)
}

fn run_bubble(cfg: &RunConfig) -> std::result::Result<i32, RunError> {
    let m = CouplingParams::new(cfg.couplings.clone())?;
    let report = bubbles::fit_slopes(&cfg.lambdas, &m, cfg.delta0)?;
    let mut w = create(&cfg.out, "slopes.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&cfg.out, "report.json", &report)?;
    for f in &report.fits {
        println!("{:<16} {:>14.6}", f.quantity, f.slope);
    }
    Ok(EXIT_OK)
}

fn run_radial(cfg: &RunConfig) -> std::result::Result<i32, RunError> {
    let sol = radial::integrate_radial(&cfg.a0, cfg.r_max, cfg.tol)?;
    let summary = radial::summarize(&sol)?;
    let balances = [1.0, 10.0, 100.0]
        .into_iter()
        .filter(|r| *r <= cfg.r_max)
        .map(|r| radial::ball_pohozaev(&sol, r))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&cfg.out, "radial.csv")?;
    sol.write_csv(&mut w)?;
    w.flush()?;
    write_json(&cfg.out, "report.json", &json!({ "summary": summary, "ball_pohozaev": balances }))?;
    match &summary.masses {
        Some(ms) => println!("alpha = {:?}", ms.alpha),
        None => println!("tail not converged at R_max = {}", cfg.r_max),
    }
    Ok(EXIT_OK)
}

fn run_pohozaev(cfg: &RunConfig) -> std::result::Result<i32, RunError> {
    let (spec, k, m) = setup(cfg)?;
    let (u, source) = if cfg.input.is_empty() {
        let rep = minimizer::minimize(&m, &k, spec, initial(cfg, spec)?, &cfg.minimize)?;
        (rep.final_u, json!({ "status": rep.status, "iterations": rep.iterations }))
    } else {
        let comps = cfg
            .input
            .iter()
            .map(|p| -> std::result::Result<ScalarField, RunError> {
                let f = ScalarField::read_binary(File::open(p)?)?;
                if f.spec() != spec {
                    return Err(Error::GridMismatch(f.spec().n(), spec.n()).into());
                }
                Ok(f)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let files: Vec<String> = cfg.input.iter().map(|p| p.display().to_string()).collect();
        (normalize(&MultiField::new(comps)?), json!({ "files": files }))
    };
    let balances = cfg
        .radii
        .iter()
        .map(|&r| pohozaev::disk_balance(&u, &m, &k, cfg.center, r))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&cfg.out, "pohozaev.csv")?;
    pohozaev::write_balances_csv(&balances, &mut w)?;
    w.flush()?;
    write_json(&cfg.out, "report.json", &json!({ "source": source, "balances": balances }))?;
    for b in &balances {
        println!("r = {}: lhs {} rhs {}", b.r, b.lhs, b.rhs);
    }
    Ok(EXIT_OK)
}
