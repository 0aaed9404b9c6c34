#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ConfigError, LoadedConfig, SolverKind};
use run::{RunOutput, RunRecord, Status, SweepParam};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG_INVALID: u8 = 2;
const EXIT_SOLVE_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "csvortex", version, about = "Self-dual Chern-Simons vortex solvers and checks")]
struct Cli {
    /// Seed for randomized diagnostics; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the torus with the configured solver and run the requested diagnostics.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat `solve` over a list of parameter values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values; separations are torus distances between the two vortices.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Integrate the radial planar profile with u(0) = s (or u ~ 2α ln r + s).
    Shoot {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long)]
        rmax: f64,
        /// Write the sampled profile as CSV.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Tabulate the bubble flux β(s) on an evenly spaced grid of s values.
    Beta {
        #[arg(long, allow_hyphen_values = true)]
        smin: f64,
        #[arg(long, allow_hyphen_values = true)]
        smax: f64,
        #[arg(long)]
        count: usize,
    },
    /// Smallest eigenvalue of the negated linearized operator at the solution.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the solution from a planar profile by the contraction scheme.
    Construct {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run the diagnostics on the solution dumps in output_dir.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Epsilon,
    Separation,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    solver: &'a str,
    seed: u64,
    passed: bool,
    runs: &'a [RunRecord],
}

#[derive(Serialize)]
struct Versions {
    csvortex: &'static str,
    csvortex_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_path: String,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    wall_time_seconds: f64,
    files: &'a [String],
}

enum Failure {
    Config(String),
    Solve(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn exit_for(status: Status) -> ExitCode {
    if status.solve_failed {
        ExitCode::from(EXIT_SOLVE_FAILED)
    } else if status.checks_failed {
        ExitCode::from(EXIT_CHECK_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::Monotone => "monotone",
        SolverKind::Newton => "newton",
        SolverKind::Perturbative => "perturbative",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Solve(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Solve(format!("cannot write {}: {e}", path.display())))
}

/// Writes the summary and manifest for a finished pipeline.
fn finish(
    command: &str,
    loaded: &LoadedConfig,
    seed: u64,
    out: &mut RunOutput,
    prefix: &str,
    started: Instant,
) -> Result<Status, Failure> {
    let dir = &loaded.config.output_dir;
    let status = out.status();
    let summary_name = format!("{prefix}summary.json");
    let summary = Summary {
        command,
        solver: solver_name(loaded.config.solver),
        seed,
        passed: !status.solve_failed && !status.checks_failed,
        runs: &out.records,
    };
    write_json(&dir.join(&summary_name), &summary)?;
    out.files.push(summary_name);
    let manifest = Manifest {
        command,
        config_path: loaded.path.display().to_string(),
        config_sha256: format!("{:x}", Sha256::digest(loaded.text.as_bytes())),
        seed,
        versions: Versions { csvortex: csvortex::VERSION, csvortex_cli: env!("CARGO_PKG_VERSION") },
        wall_time_seconds: started.elapsed().as_secs_f64(),
        files: &out.files,
    };
    write_json(&dir.join(format!("{prefix}manifest.json")), &manifest)?;
    Ok(status)
}

fn load_with(path: &Path, seed: Option<u64>, force: Option<SolverKind>) -> Result<(LoadedConfig, u64), Failure> {
    let mut loaded = config::load(path)?;
    if let Some(kind) = force {
        loaded.config.solver = kind;
        loaded.config.validate()?;
    }
    let seed = seed.unwrap_or(loaded.config.seed);
    Ok((loaded, seed))
}

fn execute(cli: Cli) -> Result<ExitCode, Failure> {
    let started = Instant::now();
    match cli.command {
        Command::Solve { config } => {
            let (loaded, seed) = load_with(&config, cli.seed, None)?;
            let mut out =
                run::solve_pipeline(&loaded.config, seed, &loaded.config.output_dir).map_err(Failure::Solve)?;
            Ok(exit_for(finish("solve", &loaded, seed, &mut out, "", started)?))
        }
        Command::Construct { config } => {
            let (loaded, seed) = load_with(&config, cli.seed, Some(SolverKind::Perturbative))?;
            let mut out =
                run::solve_pipeline(&loaded.config, seed, &loaded.config.output_dir).map_err(Failure::Solve)?;
            Ok(exit_for(finish("construct", &loaded, seed, &mut out, "", started)?))
        }
        Command::Check { config } => {
            let (loaded, seed) = load_with(&config, cli.seed, None)?;
            let mut out =
                run::check_pipeline(&loaded.config, seed, &loaded.config.output_dir).map_err(Failure::Solve)?;
            Ok(exit_for(finish("check", &loaded, seed, &mut out, "check_", started)?))
        }
        Command::Spectrum { config } => {
            let (loaded, seed) = load_with(&config, cli.seed, None)?;
            let mut out = run::spectrum_pipeline(&loaded.config, &loaded.config.output_dir).map_err(Failure::Solve)?;
            Ok(exit_for(finish("spectrum", &loaded, seed, &mut out, "spectrum_", started)?))
        }
        Command::Sweep { config, param, values } => {
            if values.is_empty() {
                return Err(Failure::Config("--values must list at least one value".into()));
            }
            let (loaded, seed) = load_with(&config, cli.seed, None)?;
            let param = match param {
                Param::Epsilon => SweepParam::Epsilon,
                Param::Separation => SweepParam::Separation,
            };
            let mut out = run::sweep_pipeline(&loaded.config, seed, param, &values, &loaded.config.output_dir)
                .map_err(
                    |e| if e.starts_with("invalid sweep value") { Failure::Config(e) } else { Failure::Solve(e) },
                )?;
            Ok(exit_for(finish("sweep", &loaded, seed, &mut out, "sweep_", started)?))
        }
        Command::Shoot { alpha, s, rmax, output } => {
            let profile = csvortex::radial_planar::shoot(alpha, s, rmax).map_err(|e| match e {
                csvortex::error::Error::InvalidParameter(m) => Failure::Config(m),
                e => Failure::Solve(e.to_string()),
            })?;
            if let Some(path) = output {
                profile.write_csv(&path).map_err(|e| Failure::Solve(e.to_string()))?;
            }
            #[derive(Serialize)]
            struct ShootSummary {
                alpha: f64,
                s: f64,
                r_max: f64,
                tag: csvortex::radial_planar::TerminalTag,
                terminal_radius: f64,
                flux_limit: f64,
                flux_quadrature: f64,
                defect_integral: f64,
            }
            let summary = ShootSummary {
                alpha,
                s,
                r_max: rmax,
                tag: profile.tag,
                terminal_radius: profile.terminal_radius,
                flux_limit: profile.flux_limit,
                flux_quadrature: profile.flux_quadrature,
                defect_integral: profile.defect_integral,
            };
            println!("{}", serde_json::to_string_pretty(&summary).expect("plain numbers serialize"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Beta { smin, smax, count } => {
            let table = csvortex::radial_planar::beta_table(smin, smax, count).map_err(|e| match e {
                csvortex::error::Error::InvalidParameter(m) => Failure::Config(m),
                e => Failure::Solve(e.to_string()),
            })?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let written = w.write_record(["s", "beta", "beta_over_8pi"]).and_then(|_| {
                for (s, b) in &table {
                    w.serialize((s, b, b / (8.0 * std::f64::consts::PI)))?;
                }
                w.flush().map_err(csv::Error::from)
            });
            written.map_err(|e| Failure::Solve(e.to_string()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(EXIT_CONFIG_INVALID)
        }
        Err(Failure::Solve(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVE_FAILED)
        }
    }
}
