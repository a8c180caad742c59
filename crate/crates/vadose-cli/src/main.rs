use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use vadose::config::{Overrides, ProblemConfig, Strategy};
use vadose::constitutive::ContinuationFunctionKind;
use vadose::discretization::KrScheme;
use vadose::runner::{self, exit_code_for_error, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "vadose",
    about = "Steady-state variably saturated groundwater flow solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a configuration file.
    Solve {
        /// Path to the configuration file.
        config: PathBuf,
        /// Output directory for head.vtk, convergence.csv and summary.txt.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the solver strategy (newton | continuation | pseudo_transient).
        #[arg(long)]
        strategy: Option<String>,
        /// Override the continuation function kind (power | linear).
        #[arg(long)]
        kind: Option<String>,
        /// Override the relative permeability scheme (upwind | central).
        #[arg(long)]
        kr_scheme: Option<String>,
        /// Multiply every mesh cell count by this factor.
        #[arg(long)]
        mesh_scale: Option<usize>,
    },
}

fn parse_overrides(
    strategy: Option<String>,
    kind: Option<String>,
    kr_scheme: Option<String>,
    mesh_scale: Option<usize>,
) -> Result<Overrides, String> {
    let strategy = match strategy {
        None => None,
        Some(s) => Some(
            Strategy::parse(&s).ok_or_else(|| format!("unknown strategy '{s}'"))?,
        ),
    };
    let kind = match kind {
        None => None,
        Some(s) => Some(
            ContinuationFunctionKind::parse(&s).ok_or_else(|| format!("unknown kind '{s}'"))?,
        ),
    };
    let kr_scheme = match kr_scheme {
        None => None,
        Some(s) => Some(KrScheme::parse(&s).ok_or_else(|| format!("unknown kr scheme '{s}'"))?),
    };
    if let Some(0) = mesh_scale {
        return Err("mesh scale must be at least 1".into());
    }
    Ok(Overrides {
        strategy,
        kind,
        kr_scheme,
        mesh_scale,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("RICHARDS_LOG", "warn"),
    )
    .init();

    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            config,
            out,
            strategy,
            kind,
            kr_scheme,
            mesh_scale,
        } => {
            let overrides = match parse_overrides(strategy, kind, kr_scheme, mesh_scale) {
                Ok(o) => o,
                Err(msg) => {
                    error!("{msg}");
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let text = match fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            let mut problem_config = match ProblemConfig::parse(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            problem_config.apply_overrides(&overrides);
            match runner::run(&problem_config, &out) {
                Ok(summary) => {
                    print!("{}", summary.report.summary_text());
                    summary.exit_code
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for_error(&e)
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
