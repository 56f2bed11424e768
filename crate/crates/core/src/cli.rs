//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::TypedValueParser;
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::synth::{self, Scenario, SynthError};
use crate::trainer::{
    evaluate_checkpoint, format_metrics_table, metric_rows, rank_features, run_ablation, run_train, TrainConfig, TrainError,
    Variant, METRIC_HEADER,
};

pub const THREADS_ENV: &str = "EVACNET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "evacnet", version, about = "Evacuation traffic forecasting with dynamic multi-graph fusion")]
pub struct Cli {
    /// Seed for every random stream; overrides the config or scenario seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's out_dir
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Log verbosity on stderr
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario (meta.csv, records.csv, scenario.json)
    Generate {
        /// Builtin name (S1, S2, S3) or path to a scenario JSON file
        #[arg(long)]
        scenario: String,
    },
    /// Train one variant from a JSON config
    Train {
        /// Training config (JSON)
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Overrides the config's variant
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(Variant::ALL.map(Variant::as_str))
            .map(|s| s.parse::<Variant>().expect("listed variant")))]
        variant: Option<Variant>,
        /// Overrides the config's data_dir
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Score a model checkpoint on a dataset directory
    Evaluate {
        /// Model checkpoint written by train
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Directory holding meta.csv and records.csv
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Train and compare the four ablation variants
    Ablate {
        /// Training config (JSON); its variant is ignored
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Overrides the config's data_dir
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Print the feature ranking learned by a masking agent
    RankFeatures {
        /// Agent checkpoint, or a model checkpoint with its agent alongside
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        let user = match self {
            CliError::Train(e) => e.is_user_error(),
            CliError::Synth(_) => true,
            CliError::Output(_) => true,
        };
        if user {
            1
        } else {
            2
        }
    }
}

fn load_config(path: &Path, cli: &Cli, data: &Option<PathBuf>) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(d) = data {
        cfg.data_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn out_or_cwd(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

/// Executes a parsed command, writing human-readable results to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate { scenario } => {
            let mut sc = Scenario::resolve(scenario)?;
            if let Some(seed) = cli.seed {
                sc.seed = seed;
            }
            let out = out_or_cwd(cli);
            let g = synth::generate(&sc)?;
            synth::write_scenario(&g, &out)?;
            writeln!(
                stdout,
                "scenario {} v{} seed {}: {} detectors, {} rows -> {}",
                sc.name,
                sc.version,
                sc.seed,
                g.truth.detectors,
                g.truth.rows,
                out.display()
            )?;
        }
        Command::Train { config, variant, data } => {
            let mut cfg = load_config(config, cli, data)?;
            if let Some(v) = variant {
                cfg = cfg.with_variant(*v);
            }
            let art = run_train(&cfg)?;
            let best = art.outcome.best_epoch.map(|e| format!(", best epoch {e}")).unwrap_or_default();
            writeln!(stdout, "{}: {} epochs ({:?}){best}", cfg.variant, art.outcome.epochs.len(), art.outcome.stop)?;
            if let Some(report) = &art.report {
                writeln!(stdout, "validation ({} windows)", report.n_windows)?;
                write!(stdout, "{}", format_metrics_table(report))?;
            }
            writeln!(stdout, "checkpoint: {}", art.checkpoint.display())?;
            if let Some(r) = &art.ranking {
                writeln!(stdout, "ranking: {}", r.display())?;
            }
        }
        Command::Evaluate { checkpoint, data } => {
            let out = cli.out.as_deref();
            let (tm, report) = evaluate_checkpoint(checkpoint, data, out)?;
            writeln!(stdout, "{} on {} ({} windows)", tm.config.variant, data.display(), report.n_windows)?;
            write!(stdout, "{}", format_metrics_table(&report))?;
        }
        Command::Ablate { config, data } => {
            let cfg = load_config(config, cli, data)?;
            let (report, path) = run_ablation(&cfg)?;
            writeln!(stdout, "{:<20} {}", "variant", METRIC_HEADER[1..].join("  "))?;
            for row in &report.rows {
                match &row.result {
                    Ok(r) => {
                        let (_, cells) = metric_rows(r).pop().expect("overall row");
                        writeln!(stdout, "{:<20} {}", row.variant.as_str(), cells.join("  "))?
                    }
                    Err(e) => writeln!(stdout, "{:<20} failed: {e}", row.variant.as_str())?,
                }
            }
            writeln!(stdout, "table: {}", path.display())?;
        }
        Command::RankFeatures { checkpoint } => {
            let ranking = rank_features(checkpoint, cli.out.as_deref())?;
            writeln!(stdout, "{:>4}  {:<28} {:>8} {:>8}", "rank", "feature", "count", "fraction")?;
            for e in &ranking {
                writeln!(
                    stdout,
                    "{:>4}  {:<28} {:>8} {:>8.4}",
                    e.rank, e.feature_name, e.mask_count, e.mask_fraction
                )?;
            }
        }
    }
    Ok(())
}

fn init_threads() {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    if let Some(n) = n {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 on success, 1 for bad input, 2 for internal failures.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().filter_level(cli.log_level.filter()).format_timestamp(None).try_init();
    init_threads();

    let outcome = std::panic::catch_unwind(|| execute(&cli, &mut std::io::stdout().lock()));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            if matches!(&e, CliError::Synth(SynthError::Unknown { .. })) {
                eprintln!("builtin scenarios: {}", synth::builtin_names().join(", "));
            }
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            2
        }
    }
}

pub fn main_exit() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
