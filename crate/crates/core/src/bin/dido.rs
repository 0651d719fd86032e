use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dido::cli::{self, IngestOptions, Mode, Representation};
use dido::measures::DEFAULT_GRID_SIZE;
use dido::simulate::{LrVariant, ScenarioConfig};
use dido::{Error, FitOptions};

#[derive(Parser)]
#[command(name = "dido", version, about = "Distribution-in-distribution-out regression in Wasserstein space")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed recorded in model files and used by `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of quantile nodes.
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// Handling of predictions that leave the measure space.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Project)]
    mode: ModeArg,
    /// Ridge penalty added to the normal system.
    #[arg(long, global = true, default_value_t = 0.0)]
    ridge: f64,
    /// Output file (output directory for `simulate`); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Solve in units of each predictor's Fréchet standard deviation.
    #[arg(long, global = true)]
    standardize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Project,
    Clamp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Project => Mode::Project,
            ModeArg::Clamp => Mode::Clamp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReprArg {
    Gaussian,
    Quantile,
}

#[derive(Subcommand)]
enum Command {
    /// Window a raw signal CSV into a dataset file.
    Ingest {
        input: PathBuf,
        /// Window length in seconds.
        #[arg(long, default_value_t = 300.0)]
        window: f64,
        #[arg(long, value_enum, default_value_t = ReprArg::Gaussian)]
        representation: ReprArg,
        /// Response column (default: last column).
        #[arg(long)]
        response: Option<String>,
        /// Time column (default: first column).
        #[arg(long)]
        time_column: Option<String>,
    },
    /// Fit a model to a dataset file and write it as JSON.
    Fit { dataset: PathBuf },
    /// Predict responses for every row of a dataset file.
    Predict { model: PathBuf, dataset: PathBuf },
    /// Run the seeded simulation study.
    Simulate {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 0.01)]
        zeta: f64,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Run every (n, p, zeta) cell of the standard lattice.
        #[arg(long)]
        lattice: bool,
        /// Generate responses without noise.
        #[arg(long)]
        noiseless: bool,
        /// Baseline regresses log std instead of std.
        #[arg(long)]
        log_std: bool,
    },
    /// Export the cumulative prediction path of one row as quantile curves.
    Trajectory {
        model: PathBuf,
        dataset: PathBuf,
        /// Row id (default: first row).
        #[arg(long)]
        row: Option<String>,
    },
}

fn run(cli: Cli) -> dido::Result<()> {
    let g = cli.global;
    let out = g.out.as_deref();
    let mode = Mode::from(g.mode);
    let fit_options = FitOptions {
        ridge: g.ridge,
        mode: mode.monotone(),
        standardize: g.standardize,
    };
    match cli.command {
        Command::Ingest { input, window, representation, response, time_column } => {
            let opts = IngestOptions {
                window_seconds: window,
                representation: match representation {
                    ReprArg::Gaussian => Representation::Gaussian,
                    ReprArg::Quantile => Representation::Quantile,
                },
                grid_size: g.grid_size.unwrap_or(DEFAULT_GRID_SIZE),
                response,
                time_column,
            };
            let report = cli::cmd_ingest(&input, &opts, out)?;
            eprintln!("{} of {} windows kept", report.rows, report.windows);
            for d in &report.dropped {
                eprintln!("dropped window {} ({}): {}", d.bucket, d.column, d.reason);
            }
        }
        Command::Fit { dataset } => {
            let report = cli::cmd_fit(&dataset, &fit_options, g.grid_size, g.seed, out)?;
            eprint!("{report}");
        }
        Command::Predict { model, dataset } => {
            let preds = cli::cmd_predict(&model, &dataset, mode, out)?;
            let errors = preds.errors();
            for (id, e) in &errors {
                eprintln!("row {id}: {e}");
            }
            if preds.corrected_count() > 0 {
                eprintln!("{} predictions were projected or clamped", preds.corrected_count());
            }
            if let Some(first) = errors.first() {
                return Err(Error::InvalidMeasure(format!("{} rows failed, first: {}", errors.len(), first.0)));
            }
        }
        Command::Simulate { n, p, zeta, reps, lattice, noiseless, log_std } => {
            let config = ScenarioConfig {
                n,
                p,
                zeta,
                reps,
                seed: g.seed.unwrap_or(0),
                noiseless,
                lr_variant: if log_std { LrVariant::LogStd } else { LrVariant::Std },
                ..ScenarioConfig::default()
            };
            let dir = g.out.unwrap_or_else(|| PathBuf::from("."));
            let files = cli::cmd_simulate(&config, lattice, &dir)?;
            print!("{}", std::fs::read_to_string(&files.table)?);
            eprintln!("wrote {} and {}", files.csv.display(), files.table.display());
        }
        Command::Trajectory { model, dataset, row } => {
            let grid = g.grid_size.unwrap_or(DEFAULT_GRID_SIZE);
            cli::cmd_trajectory(&model, &dataset, row.as_deref(), grid, mode, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
