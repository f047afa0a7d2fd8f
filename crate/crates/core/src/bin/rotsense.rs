use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rotsense::cli::{dispatch, Command};
use rotsense::config::{parse_config, RunConfig};

/// DOA estimation with rotatable-antenna sparse arrays.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Array, gain and joint SVC curves for one target direction.
    SvcCurves {
        #[command(flatten)]
        common: Common,
        /// Target direction in degrees (default 15).
        #[arg(long, allow_hyphen_values = true)]
        theta_k: Option<f64>,
        /// Directivity factor p for the curves (default 5; the estimation default is 3).
        #[arg(long)]
        directivity: Option<f64>,
    },
    /// RMSE of all schemes versus SNR.
    RmseVsSnr {
        #[command(flatten)]
        common: Common,
    },
    /// RMSE versus sparse factor L, one CSV per directivity factor.
    RmseVsSparse {
        #[command(flatten)]
        common: Common,
    },
    /// RMSE versus directivity factor p.
    RmseVsDirectivity {
        #[command(flatten)]
        common: Common,
    },
    /// One realization: print estimates and dump spectra.
    SingleRun {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sweep.trials`.
    #[arg(long)]
    trials: Option<usize>,
}

fn load(common: &Common) -> Result<RunConfig, String> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        None => String::new(),
    };
    let mut config = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    if let Some(trials) = common.trials {
        if trials == 0 {
            return Err("--trials must be at least 1".into());
        }
        config.sweep.trials = trials;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<String, String> {
    let (command, common) = match &cli.command {
        Cmd::SvcCurves { common, .. } => (Command::SvcCurves, common),
        Cmd::RmseVsSnr { common } => (Command::RmseVsSnr, common),
        Cmd::RmseVsSparse { common } => (Command::RmseVsSparse, common),
        Cmd::RmseVsDirectivity { common } => (Command::RmseVsDirectivity, common),
        Cmd::SingleRun { common } => (Command::SingleRun, common),
    };
    let mut config = load(common)?;
    if let Cmd::SvcCurves { theta_k, directivity, .. } = &cli.command {
        if let Some(t) = theta_k {
            if !t.is_finite() || t.abs() > config.angles_deg.theta_max {
                return Err(format!(
                    "--theta-k {t} lies outside the sensing range ±{}",
                    config.angles_deg.theta_max
                ));
            }
            config.svc.theta_k = t.to_radians();
            config.angles_deg.svc_theta_k = *t;
        }
        if let Some(p) = directivity {
            if !p.is_finite() || *p < 0.0 {
                return Err(format!("--directivity must be >= 0, got {p}"));
            }
            config.svc.directivity = *p;
        }
    }
    let outcome = dispatch(command, &config).map_err(|e| e.to_string())?;
    Ok(format!("{} (seed {})", outcome.summary, outcome.seed))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
