//! `spectral-law`: simulate random-matrix models, solve their limiting
//! spectral laws and compare the two.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spectral_law::compare::{batch_compare_series, ComparisonReport};
use spectral_law::kernel::ZGrid;
use spectral_law::simulate::{simulate_esd, simulate_esd_series, ModelSpec, Seed, CATALOG};
use spectral_law::spectra::histogram;
use spectral_law::theory::{problem_for, solve_model, DEFAULT_Q};
use spectral_law::Error;

use config::{config_hash, ConfigError, ExperimentConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_COUNT: usize = 800;
const DEFAULT_ETA: f64 = 0.01;
const OVERLAY_BINS: usize = 50;

#[derive(Debug, Parser)]
#[command(name = "spectral-law", version, about = "Limiting spectral laws of structured random matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the model and write one eigenvalue CSV per seed.
    Simulate(RunArgs),
    /// Solve the limiting law and write the density CSV with a JSON sidecar.
    Solve(RunArgs),
    /// Simulate, solve and write per-seed reports and overlays.
    Compare(RunArgs),
    /// Print the model families and their parameters.
    ListModels {
        /// Print the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list; overrides `seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<Seed>>,
    /// Overrides the grid's imaginary offset.
    #[arg(long)]
    eta: Option<f64>,
    /// Overrides the solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn parse(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    fn solver(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BadConfig(_) | Error::EmptySeeds => 2,
            Error::NothingConverged | Error::MassOutOfBand(_) | Error::NoConvergence(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Parse(m) => Failure::parse(format!("config parse error {m}")),
            ConfigError::Invalid(m) => Failure::parse(format!("invalid config: {m}")),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// A loaded configuration with overrides applied.
struct Run {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn load(args: &RunArgs) -> Outcome<Run> {
        let text = fs::read_to_string(&args.config)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", args.config.display())))?;
        let mut cfg = ExperimentConfig::parse(&text)?;
        if let Some(seeds) = &args.seeds {
            cfg.seeds = seeds.clone();
        }
        // without a configured grid the override applies to the default one
        if let (Some(eta), Some(g)) = (args.eta, cfg.zgrid.as_mut()) {
            g.eta = eta;
        }
        if let Some(tol) = args.tol {
            cfg.solver.tol = tol;
        }
        cfg.validate()?;
        let out = args
            .out
            .clone()
            .or_else(|| cfg.outputs.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out).map_err(|e| Failure::usage(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            cfg,
            hash: config_hash(&text),
            out,
        })
    }

    fn grid(&self, eta_override: Option<f64>) -> Outcome<ZGrid> {
        match self.cfg.grid() {
            Some(g) => Ok(g?),
            None => {
                let prob = problem_for(&self.cfg.model, self.cfg.dims.p, self.cfg.dims.n)?;
                let eta = eta_override.unwrap_or(DEFAULT_ETA);
                if !(eta > 0.0) {
                    return Err(Failure::parse(format!("eta must be positive, got {eta}")));
                }
                Ok(prob.default_grid(DEFAULT_COUNT, eta)?)
            }
        }
    }

    fn write(&self, files: &mut Vec<String>, name: String, contents: &str) -> Outcome<()> {
        let path = self.out.join(&name);
        fs::write(&path, contents).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
        files.push(name);
        Ok(())
    }

    fn manifest(&self, command: &str, files: Vec<String>) -> Outcome<()> {
        let manifest = Manifest {
            tool: "spectral-law",
            version: VERSION,
            command,
            config_sha256: &self.hash,
            family: self.cfg.model.family(),
            seeds: &self.cfg.seeds,
            files,
        };
        let mut ignored = Vec::new();
        self.write(&mut ignored, format!("manifest_{command}.json"), &to_json(&manifest))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config_sha256: &'a str,
    family: &'a str,
    seeds: &'a [Seed],
    files: Vec<String>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'a str,
    config_sha256: &'a str,
}

#[derive(Serialize)]
struct DensitySidecarFile<'a> {
    eta: f64,
    atom_at_zero: f64,
    c: f64,
    converged_fraction: f64,
    max_residual: f64,
    moment_miss: f64,
    q: Option<usize>,
    separable: bool,
    link: &'a str,
    provenance: Provenance<'a>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a ComparisonReport,
    provenance: Provenance<'a>,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn suffix(seed: Seed, t: Option<usize>) -> String {
    match t {
        Some(t) => format!("seed{seed}_t{t}"),
        None => format!("seed{seed}"),
    }
}

fn observation_indices(cfg: &ExperimentConfig) -> Option<Vec<usize>> {
    match (&cfg.model, &cfg.dims.t) {
        (ModelSpec::MatrixAr { .. }, Some(ts)) => Some(ts.clone()),
        _ => None,
    }
}

fn cmd_simulate(args: &RunArgs) -> Outcome<()> {
    let run = Run::load(args)?;
    let (p, n) = (run.cfg.dims.p, run.cfg.dims.n);
    let mut files = Vec::new();
    for &seed in &run.cfg.seeds {
        match observation_indices(&run.cfg) {
            Some(ts) => {
                let esds = simulate_esd_series(&run.cfg.model, p, n, seed, &ts)?;
                for (e, t) in esds.iter().zip(&ts) {
                    run.write(&mut files, format!("eigenvalues_{}.csv", suffix(seed, Some(*t))), &e.to_csv())?;
                }
            }
            None => {
                let e = simulate_esd(&run.cfg.model, p, n, seed)?;
                run.write(&mut files, format!("eigenvalues_{}.csv", suffix(seed, None)), &e.to_csv())?;
            }
        }
    }
    run.manifest("simulate", files)
}

fn cmd_solve(args: &RunArgs) -> Outcome<()> {
    let run = Run::load(args)?;
    let z = run.grid(args.eta)?;
    let sol = solve_model(
        &run.cfg.model,
        run.cfg.dims.p,
        run.cfg.dims.n,
        DEFAULT_Q,
        &z,
        &run.cfg.solver_config(),
    )?;
    let field = &sol.solution.field;
    let density = &sol.solution.density;
    let max_residual = field
        .residual
        .iter()
        .zip(&field.converged)
        .filter(|(_, ok)| **ok)
        .map(|(r, _)| *r)
        .fold(0.0, f64::max);
    let sidecar = DensitySidecarFile {
        eta: density.eta,
        atom_at_zero: density.atom_at_zero,
        c: density.c,
        converged_fraction: density.converged_fraction,
        max_residual,
        moment_miss: sol.moment_miss,
        q: sol.problem.q,
        separable: sol.solution.separable,
        link: &sol.problem.descriptor,
        provenance: Provenance {
            version: VERSION,
            config_sha256: &run.hash,
        },
    };
    let mut files = Vec::new();
    run.write(&mut files, "density.csv".into(), &density.to_csv())?;
    run.write(&mut files, "density.json".into(), &to_json(&sidecar))?;
    run.manifest("solve", files)?;
    if density.converged_fraction < 0.5 {
        return Err(Failure::solver(format!(
            "only {:.1}% of grid points converged",
            100.0 * density.converged_fraction
        )));
    }
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Outcome<()> {
    let run = Run::load(args)?;
    let z = run.grid(args.eta)?;
    let ts = observation_indices(&run.cfg).unwrap_or_default();
    let batch = batch_compare_series(
        &run.cfg.model,
        run.cfg.dims.p,
        run.cfg.dims.n,
        &run.cfg.seeds,
        &ts,
        &z,
        &run.cfg.solver_config(),
    )?;
    let density = &batch.solution.solution.density;
    let (lo, hi) = (z.x()[0], z.x()[z.len() - 1]);
    let mut files = Vec::new();
    for (report, esd) in batch.reports.iter().zip(&batch.esds) {
        let tag = suffix(report.metadata.seed.unwrap_or(0), report.metadata.t);
        let file = ReportFile {
            report,
            provenance: Provenance {
                version: VERSION,
                config_sha256: &run.hash,
            },
        };
        run.write(&mut files, format!("report_{tag}.json"), &to_json(&file))?;
        let hist = histogram(esd, OVERLAY_BINS, lo, hi)?;
        let mut overlay = String::from("x,hist_density,theory_density\n");
        for (x, rho) in density.x.iter().zip(&density.rho) {
            let _ = writeln!(overlay, "{x},{},{rho}", hist.height_at(*x));
        }
        run.write(&mut files, format!("overlay_{tag}.csv"), &overlay)?;
    }
    run.write(&mut files, "summary.csv".into(), &batch.to_csv())?;
    run.manifest("compare", files)?;
    if density.converged_fraction < 0.5 {
        return Err(Failure::solver(format!(
            "only {:.1}% of grid points converged",
            100.0 * density.converged_fraction
        )));
    }
    Ok(())
}

fn cmd_list_models(json: bool) -> Outcome<()> {
    if json {
        #[derive(Serialize)]
        struct Entry<'a> {
            family: &'a str,
            required: &'a [&'a str],
            optional: &'a [&'a str],
            summary: &'a str,
        }
        let entries: Vec<Entry> = CATALOG
            .iter()
            .map(|f| Entry {
                family: f.family,
                required: f.required,
                optional: f.optional,
                summary: f.summary,
            })
            .collect();
        print!("{}", to_json(&entries));
    } else {
        for f in CATALOG.iter() {
            let mut line = format!("{:<18} required: {}", f.family, f.required.join(", "));
            if !f.optional.is_empty() {
                let _ = write!(line, "; optional: {}", f.optional.join(", "));
            }
            println!("{line}");
            println!("{:<18} {}", "", f.summary);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ListModels { json } => cmd_list_models(*json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
