use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use collapse_cli::output::{write_run, write_sweep};
use collapse_cli::run::{execute, sweep, CliError};
use collapse_cli::{load_config, presets, ConfigError};

#[derive(Parser)]
#[command(name = "collapse", version, about = "Run hitting and continuous reduction ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a shipped preset.
    config: String,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: number of processors).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ensemble size (overrides the config).
    #[arg(long)]
    trajectories: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Mu,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensembles of a scenario and write trajectories.csv, events.csv,
    /// summary.json and (for engine = both) compare.json.
    Run(Common),
    /// Frequency sweep at fixed gamma, written to sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

fn prepare(common: &Common) -> Result<(collapse_cli::Scenario, PathBuf), CliError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.trajectories {
        cfg.trajectories = n;
    }
    if common.workers == Some(0) {
        return Err(ConfigError::new("--workers", "must be >= 1").into());
    }
    let out = common.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    let scn = cfg.resolve()?;
    for w in &scn.warnings {
        eprintln!("warning: {w}");
    }
    Ok((scn, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(common) => prepare(&common).and_then(|(scn, out)| {
            let outcome = execute(&scn, common.workers)?;
            write_run(&out, &scn, &outcome)
        }),
        Command::Sweep { common, param: SweepParam::Mu, values } => prepare(&common).and_then(|(scn, out)| {
            let rows = sweep(&scn, &values, common.workers)?;
            write_sweep(&out, &rows)
        }),
        Command::Presets { name } => match name {
            None => {
                for n in presets::PRESET_NAMES {
                    println!("{n}");
                }
                Ok(())
            }
            Some(n) => match presets::preset(&n) {
                Some(text) => {
                    print!("{text}");
                    Ok(())
                }
                None => Err(ConfigError::new("preset", format!("{n:?} is unknown")).into()),
            },
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
