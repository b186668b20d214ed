//! Command-line driver: scenario runs, convergence studies, plot data, and
//! the cross-scenario ledger.
//!
//! Exit codes: 0 when the pipeline completes (inequality verdicts are
//! results, not errors), 2 on solver non-convergence, 3 on configuration or
//! scenario problems (including missing files), 1 for everything else.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use confcap::pipeline::{
    convergence_csv, convergence_study, load_run_config, load_scenario, plots_from_dir,
    run_to_dir, write_ledger, RunConfig,
};
use confcap::{Error, Result};

#[derive(Parser)]
#[command(
    name = "confcap",
    about = "Conformal capacity, monotone level-set quantities, and mass inequalities \
             for star-shaped bodies",
    version
)]
struct Cli {
    /// Pin the reported determinism flag (every stage is deterministic
    /// regardless; the flag is recorded in the report).
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and write its artifacts.
    Run {
        /// Run configuration JSON; defaults apply when omitted.
        config: Option<PathBuf>,
        /// Scenario file, overriding the one named in the configuration.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Artifact directory, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a configured scenario at a ladder of grid resolutions.
    Converge {
        config: PathBuf,
        /// Number of refinement levels (the configured grid is the finest).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Regenerate plot CSVs from a finished run directory.
    Plots { run_dir: PathBuf },
    /// Collect verdicts from finished run directories into a ledger and an
    /// eta-alpha scatter.
    Ledger {
        dirs: Vec<PathBuf>,
        /// Where to write ledger.csv and scatter.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    if let Ok(n) = std::env::var("CONFCAP_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => confcap::par::configure_threads(n),
            _ => {
                eprintln!("error: CONFCAP_THREADS must be a positive integer, got {n:?}");
                std::process::exit(3);
            }
        }
    }

    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, scenario, out } => {
            let cfg = resolve_config(config, scenario, out, cli.deterministic)?;
            let scenario_path = cfg.scenario.clone().ok_or_else(|| {
                Error::InvalidConfig("no scenario given (config `scenario` or --scenario)".into())
            })?;
            let out_dir = cfg.output_dir.clone().ok_or_else(|| {
                Error::InvalidConfig("no output directory (config `output_dir` or --out)".into())
            })?;
            let scenario = load_scenario(&scenario_path)?;
            run_to_dir(&scenario, &cfg, &out_dir)?;
            print!("{}", std::fs::read_to_string(out_dir.join("summary.txt"))?);
            println!("artifacts: {}", out_dir.display());
            Ok(())
        }
        Command::Converge { config, levels } => {
            let cfg = resolve_config(Some(config), None, None, cli.deterministic)?;
            let scenario_path = cfg.scenario.clone().ok_or_else(|| {
                Error::InvalidConfig("convergence config must name a scenario".into())
            })?;
            let out_dir = cfg.output_dir.clone().ok_or_else(|| {
                Error::InvalidConfig("convergence config must name an output_dir".into())
            })?;
            let scenario = load_scenario(&scenario_path)?;
            let study = convergence_study(&scenario, &cfg, levels)?;
            let csv = convergence_csv(&study);
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("convergence.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Plots { run_dir } => {
            plots_from_dir(&run_dir)?;
            println!("wrote u_curve.csv, q_curve.csv to {}", run_dir.display());
            Ok(())
        }
        Command::Ledger { dirs, out } => {
            if dirs.is_empty() {
                return Err(Error::InvalidConfig(
                    "ledger needs at least one run directory".into(),
                ));
            }
            match write_ledger(&dirs, &out)? {
                Some(c) => println!("fitted alpha ~ C*sqrt(eta): C = {c:.6}"),
                None => println!("no positive-eta runs; scatter is header-only"),
            }
            println!("wrote ledger.csv, scatter.csv to {}", out.display());
            Ok(())
        }
    }
}

/// Load the optional config file and fold in the command-line overrides.
fn resolve_config(
    config: Option<PathBuf>,
    scenario: Option<PathBuf>,
    out: Option<PathBuf>,
    deterministic: bool,
) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(path) => load_run_config(&path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = scenario {
        cfg.scenario = Some(s);
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    if deterministic {
        cfg.deterministic = true;
    }
    Ok(cfg)
}
