use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drls::cli::{self, exit, RunOptions};

#[derive(Parser)]
#[command(
    name = "drls",
    version,
    about = "Diffusion RLS simulator and transient theory engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run {
        config: PathBuf,
        /// Exit with status 3 if theory and simulation disagree beyond the
        /// configured tolerances.
        #[arg(long)]
        check_acceptance: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Run one experiment per value of a config key.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `signal.profile.period`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        check_acceptance: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        prefix: Option<String>,
    },
    /// Validate a config and print it with every default filled in.
    Check { config: PathBuf },
}

fn fail(err: drls::Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(cli::exit_code(&err) as u8)
}

fn summarize(label: &str, report: &cli::RunReport) {
    for f in &report.files {
        println!("{label}: wrote {}", f.display());
    }
    if let Some(d) = &report.deviation {
        println!(
            "{label}: theory vs empirical DRLS: transient {:.3} dB (max {:.3}), steady-state {:.3} dB (max {:.3})",
            d.transient.mean_abs_db, d.transient.max_abs_db, d.steady_state.mean_abs_db, d.steady_state.max_abs_db
        );
    }
    if !report.trajectory.excluded_runs.is_empty() {
        println!(
            "{label}: {} runs excluded",
            report.trajectory.excluded_runs.len()
        );
    }
    if let Some(b) = &report.acceptance_breach {
        println!("{label}: ACCEPTANCE BREACH: {b}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    match args.command {
        Command::Run {
            config,
            check_acceptance,
            out_dir,
            prefix,
        } => {
            let cfg = match cli::parse_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let opts = RunOptions {
                check_acceptance,
                output_dir: out_dir,
                prefix,
            };
            match cli::run_experiment(&cfg, &opts) {
                Ok(report) => {
                    summarize("run", &report);
                    ExitCode::from(report.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            check_acceptance,
            out_dir,
            prefix,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(exit::VALIDATION as u8);
                }
            };
            let opts = RunOptions {
                check_acceptance,
                output_dir: out_dir,
                prefix,
            };
            match cli::sweep(&text, &param, &values, &opts) {
                Ok(reports) => {
                    let mut code = exit::SUCCESS;
                    for (label, r) in &reports {
                        summarize(label, r);
                        code = code.max(r.exit_code());
                    }
                    ExitCode::from(code as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Check { config } => match cli::check(&config) {
            Ok(resolved) => {
                print!("{}", resolved.config.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
