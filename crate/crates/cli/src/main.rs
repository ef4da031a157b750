use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polyloc::pose::parse_sensor_list;
use polyloc::{Error, Result};
use polyloc_cli::commands::{self, standard_subsets, CHECKPOINT_FILE};
use polyloc_cli::config::RunConfig;
use polyloc_cli::{exit_code, EXIT_RUNTIME, EXIT_VALIDATION};

#[derive(Parser)]
#[command(name = "polyloc", version, about = "Multi-sensor 6DoF localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Sensor subset, e.g. `L1,C1,R`.
    #[arg(long, global = true)]
    sensors: Option<String>,

    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest (written to --out or the configured dataset).
    SynthGen,
    /// Fill ground-truth gaps, align all streams and write the manifest.
    Sync,
    /// Train; --checkpoint resumes from a saved run.
    Train,
    /// Evaluate a checkpoint on --sensors, or on the seven standard subsets.
    Eval,
    /// Finite-difference check of every differentiable module.
    Gradcheck {
        /// Add a fixture with a wrong-sign gradient, which must fail.
        #[arg(long)]
        inject_sign_flip: bool,
    },
    /// Print metrics and loss summaries found in --out.
    Report,
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("run"))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &cli.sensors {
        cfg.sensors = parse_sensor_list(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::SynthGen => {
            let root = cli.out.clone().unwrap_or_else(|| cfg.dataset.clone());
            print!("{}", commands::synth_gen(&cfg, &root)?);
        }
        Command::Sync => print!("{}", commands::sync(&cfg, &cfg.dataset)?.text()),
        Command::Train => {
            let s = commands::train(&cfg, &cfg.dataset, cli.checkpoint.as_deref(), &out_dir(cli))?;
            print!("{}", s.text());
        }
        Command::Eval => {
            let ck = cli
                .checkpoint
                .clone()
                .unwrap_or_else(|| out_dir(cli).join(CHECKPOINT_FILE));
            let subsets = if cli.sensors.is_some() {
                vec![cfg.sensors.clone()]
            } else {
                standard_subsets()
            };
            let s = commands::eval(&cfg, &cfg.dataset, &ck, &subsets, &out_dir(cli))?;
            print!("{}", s.table);
        }
        Command::Gradcheck { inject_sign_flip } => {
            let results = commands::gradcheck(*inject_sign_flip);
            for r in &results {
                println!("{}", r.line());
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
            println!("{} entries, {} failed", results.len(), failed.len());
            if !failed.is_empty() {
                eprintln!("gradient check failed: {}", failed.join(", "));
                return Ok(EXIT_RUNTIME);
            }
        }
        Command::Report => print!("{}", commands::report(&out_dir(cli))?),
    }
    Ok(0)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("UNLOC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("UNLOC_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    let code = init_threads().and_then(|_| run(&cli)).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    });
    ExitCode::from(code as u8)
}
