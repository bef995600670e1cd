use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mistr::benchmark::Profile;
use mistr::commands::{self, BenchmarkArgs, Design, SimulateArgs};
use mistr::config::RunConfig;
use mistr::report::Report;
use mistr::CliError;
use mistr_core::simulation::SettingId;

/// Heterogeneous treatment effects from right-censored survival data.
///
/// Exit codes: 0 success, 2 validation error, 3 degenerate estimation, 4 I/O error.
#[derive(Parser)]
#[command(name = "mistr", version)]
struct Cli {
    /// Worker threads (default: $MISTR_THREADS, else all cores). Results do
    /// not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its true effects.
    Simulate {
        /// Design: 1-10, 200, 201, 202, 203a, 203b, 204, 204a, 204b, or mimic.
        #[arg(long)]
        setting: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo draws per true effect.
        #[arg(long, default_value_t = 20_000)]
        n_mc: usize,
        /// Generate without censoring.
        #[arg(long)]
        no_censoring: bool,
        /// Covariate file for the mimic design.
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// Censoring rate of the mimic design.
        #[arg(long, default_value_t = 24.7)]
        lambda_c: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model and write a model directory.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Flat `key = value` configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` settings applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict effects and variances at query covariates.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the simulation benchmark.
    Benchmark {
        /// Comma-separated designs.
        #[arg(long, value_delimiter = ',', required = true)]
        settings: Vec<String>,
        /// desk or full.
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Override the profile's replication count.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize benchmark runs found below a directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Output directory (default: the results directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    mistr::init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate { setting, n, seed, n_mc, no_censoring, covariates, lambda_c, out } => {
            let design = Design::parse(&setting, covariates.as_deref(), lambda_c)?;
            let args = SimulateArgs { design, n, seed, n_mc, censoring: !no_censoring };
            let m = commands::simulate(&args, &out)?;
            println!("wrote {} (censoring rate {:.1}%)", out.display(), 100.0 * m.diagnostics["censoring_rate"].as_f64().unwrap_or(0.0));
        }
        Command::Fit { data, config, set, out } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::from_file(p)?,
                None => RunConfig::default(),
            };
            for kv in &set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| CliError::Validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                cfg.set(k.trim(), v.trim())?;
            }
            if cfg.method.is_iv() && cfg.schema.instrument.is_none() {
                cfg.schema.instrument = Some("z".into());
            }
            let m = commands::fit(&data, &cfg, &out)?;
            println!("fitted {} in {:.1}s, model in {}", cfg.method, m.wall_clock_seconds, out.display());
        }
        Command::Predict { model, queries, out } => {
            let s = commands::predict(&model, &queries, &out)?;
            if s.failed > 0 {
                eprintln!("warning: {} of {} rows could not be estimated (written as NA)", s.failed, s.rows);
            }
            println!("wrote {} predictions to {}", s.rows, out.display());
        }
        Command::Benchmark { settings, profile, reps, seed, out } => {
            let mut profile = Profile::by_name(&profile)?;
            if let Some(r) = reps {
                profile.reps = r;
            }
            let settings = settings
                .iter()
                .map(|s| s.parse::<SettingId>().map_err(CliError::from_core))
                .collect::<Result<Vec<_>, _>>()?;
            let reps = commands::run_benchmark(&BenchmarkArgs { settings, profile, seed }, &out)?;
            println!("ran {} replications, results in {}", reps.len(), out.display());
        }
        Command::Report { results, out } => {
            let out = out.unwrap_or_else(|| results.clone());
            match commands::report(&results, &out)? {
                Report::Empty => println!("nothing to report: no benchmark manifest under {}", results.display()),
                Report::Tables { markdown, .. } => print!("{markdown}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
