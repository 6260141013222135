use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use expolaw::config::{parse_config, ExperimentConfig};
use expolaw::runner::{self, RunError, RunManifest};

#[derive(Parser)]
#[command(
    name = "expolaw",
    version,
    about = "Hitting and return time experiments for random circle maps"
)]
struct Cli {
    /// Config file; flags below override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for all random streams
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Sample count per radius
    #[arg(long, global = true)]
    samples: Option<usize>,

    /// Target ball radius; repeat the flag for several radii
    #[arg(long, global = true)]
    radius: Vec<f64>,

    /// Target point on the circle
    #[arg(long, global = true)]
    target: Option<f64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (0 = one per core)
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record one driven orbit to orbit.csv
    Orbit {
        /// Steps to iterate past the initial state
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Hitting-time survival law from stationary starts
    HittingLaw,
    /// Return-time survival law from starts inside the target
    ReturnLaw,
    /// Return-time scaling slope across a radius ladder
    RecurrenceRate,
    /// Sup gap between conditional and unconditional hitting survival
    Delta,
    /// Covariance decay over a lag grid
    Correlations,
    /// Annulus mass bound over a radius/width grid
    AnnulusCheck,
    /// Stationary sample dump with distribution self-checks
    Stationary,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            parse_config(&text).map_err(|e| RunError::Config(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(samples) = cli.samples {
        if samples == 0 {
            return Err(RunError::Config("--samples must be at least 1".to_string()));
        }
        config.samples = samples;
    }
    if !cli.radius.is_empty() {
        for &r in &cli.radius {
            if !(r > 0.0 && r < 0.5) {
                return Err(RunError::Config(format!(
                    "--radius {r} is outside (0, 0.5)"
                )));
            }
        }
        config.radii = cli.radius.clone();
        config.radii_explicit = true;
    }
    if let Some(target) = cli.target {
        if !(0.0..1.0).contains(&target) {
            return Err(RunError::Config(format!(
                "--target {target} is outside [0, 1)"
            )));
        }
        config.target = target;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Command::Orbit { steps: Some(steps) } = &cli.command {
        if *steps == 0 {
            return Err(RunError::Config("--steps must be at least 1".to_string()));
        }
        config.steps = *steps;
    }
    // the rate experiment regresses over a ladder of radii, so a single
    // default radius is swapped for a dyadic ladder unless radii were chosen
    if matches!(cli.command, Command::RecurrenceRate) && !config.radii_explicit {
        config.radii = runner::dyadic_radius_ladder();
    }
    Ok(config)
}

fn dispatch(cli: &Cli, config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    let workers = cli.workers.unwrap_or(0);
    match cli.command {
        Command::Orbit { .. } => runner::run_orbit(config, workers),
        Command::HittingLaw => runner::run_hitting_law(config, workers),
        Command::ReturnLaw => runner::run_return_law(config, workers),
        Command::RecurrenceRate => runner::run_rate(config, workers),
        Command::Delta => runner::run_delta(config, workers),
        Command::Correlations => runner::run_correlations(config, workers),
        Command::AnnulusCheck => runner::run_annulus(config, workers),
        Command::Stationary => runner::run_stationary(config, workers),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(&cli, &config) {
        Ok(manifest) => {
            println!(
                "{}: wrote {} (hash {}, seed {}, {:.2}s)",
                manifest.subcommand,
                config.out_dir.display(),
                manifest.config_hash,
                manifest.seed,
                manifest.duration_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
