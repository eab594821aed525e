//! Command-line front end for the OTFS radar simulator.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
//! arguments, 3 a numerical check failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otfs_radar::experiment::{
    compare, lemma_check, run_scenario, run_sweep, Experiment, ExperimentSpec, ResultRecord,
    PRESETS,
};
use otfs_radar::grid::SystemConfig;
use otfs_radar::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "otfs-radar",
    version,
    about = "OTFS radar simulation and OFDM comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scene's Monte-Carlo trials and write metrics, profiles and plots.
    Simulate(RunArgs),
    /// Run the spec's velocity or SNR sweep.
    Sweep(RunArgs),
    /// Check the gain-matrix statistics of random QPSK frames.
    LemmaCheck(LemmaArgs),
    /// Run OTFS and OFDM on the same scene and print a side-by-side table.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in spec: single-target, velocity-sweep or snr-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// Seed of trial 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct LemmaArgs {
    /// Experiment spec whose system configuration is used; a 4x4 grid
    /// with unit symbol power otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Also write the report as JSON to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    Config(String),
    Check(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigParse { .. }
            | Error::InvalidConfig(_)
            | Error::EmptySweep
            | Error::OutOfAmbiguityRange { .. }
            | Error::NonIntegerTap { .. }
            | Error::DuplicateTap { .. }
            | Error::TapOutOfGrid { .. }
            | Error::DelayExceedsCp { .. } => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn load(args: &RunArgs) -> Result<Experiment, Failure> {
    let exp = match (&args.config, &args.preset) {
        (Some(path), _) => Experiment::load(path)?,
        (None, Some(name)) => Experiment::from_spec(ExperimentSpec::preset(name)?)?,
        (None, None) => Experiment::from_spec(ExperimentSpec::default())?,
    };
    Ok(exp.with_overrides(args.seed, args.trials, args.out.clone())?)
}

fn print_summary(record: &ResultRecord) {
    println!("spec {}", record.spec_hash);
    for a in &record.aggregates {
        println!("{:<5} {:<20} {}", a.system, a.metric, a.value);
    }
    if !record.sweep.is_empty() {
        println!("{} sweep rows", record.sweep.len());
    }
    println!(
        "wrote {} files to {}",
        record.files.len(),
        record.spec.output_dir().display()
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(args) => {
            set_jobs(args.jobs)?;
            let exp = load(&args)?;
            print_summary(&run_scenario(&exp)?);
        }
        Command::Sweep(args) => {
            set_jobs(args.jobs)?;
            let exp = load(&args)?;
            print_summary(&run_sweep(&exp)?);
        }
        Command::Compare(args) => {
            set_jobs(args.jobs)?;
            let exp = load(&args)?;
            let (record, table) = compare(&exp)?;
            print!("{table}");
            print_summary(&record);
        }
        Command::LemmaCheck(args) => {
            set_jobs(args.jobs)?;
            let cfg = match &args.config {
                Some(path) => Experiment::load(path)?.cfg,
                None => SystemConfig::unit(4, 4)?,
            };
            let report = lemma_check(&cfg, args.trials, args.seed)?;
            print!("{}", report.render());
            if let Some(dir) = &args.out {
                std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.to_string()))?;
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
                std::fs::write(dir.join("lemma.json"), json + "\n")
                    .map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            if !report.passed() {
                return Err(Failure::Check(
                    "gain matrix statistics out of tolerance".into(),
                ));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            eprintln!("presets: {}", PRESETS.join(", "));
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
