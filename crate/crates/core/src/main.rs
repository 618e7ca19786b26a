use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noether_lattice::scenario::{
    exit_code, inspect_checkpoint, load_config, run_scenario, Overrides, RunOptions,
};

#[derive(Parser)]
#[command(name = "noether-lattice", version, about = "Field-theory lattice scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write artifacts here instead of the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; results are bit-reproducible for a fixed count.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Accept time steps above the dt·mc²/h bound.
    #[arg(long, global = true)]
    allow_large_dt: bool,
    /// Seed for random initial states without their own seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario.
    Run { config: PathBuf },
    /// Parse and validate a scenario without running it.
    Validate { config: PathBuf },
    /// Print grid, time, norm and charges of a checkpoint.
    Inspect { checkpoint: PathBuf },
    /// Print the configuration JSON schema.
    Schema,
    /// Print the program version.
    Version,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let overrides = Overrides {
        output_dir: cli.output_dir.clone(),
        allow_large_dt: cli.allow_large_dt,
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Run { config } => load_config(config, &overrides).and_then(|cfg| {
            let summary = run_scenario(&cfg, &RunOptions { threads: cli.threads })?;
            for f in &summary.manifest.files {
                println!("wrote {}", summary.output_dir.join(&f.name).display());
            }
            for c in &summary.manifest.checks {
                println!(
                    "{} {}: {:e} (tolerance {:e})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
            println!("wrote {}", summary.output_dir.join("manifest.json").display());
            Ok(())
        }),
        Command::Validate { config } => load_config(config, &overrides).map(|_| println!("OK")),
        Command::Inspect { checkpoint } => inspect_checkpoint(checkpoint).map(|i| print!("{i}")),
        Command::Schema => {
            let schema = noether_lattice::scenario::config_schema();
            println!("{}", serde_json::to_string_pretty(&schema).expect("schema serialises"));
            Ok(())
        }
        Command::Version => {
            println!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
