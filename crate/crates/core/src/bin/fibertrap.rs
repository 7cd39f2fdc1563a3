use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fibertrap::cli_io::{load_config, run, Command};

/// Wheel-trap and fiber-cavity simulation toolkit.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set drive.v_rf=120`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.config, &cli.overrides).and_then(|cfg| {
        if cfg.config.threads > 0 {
            // ignore failure if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.config.threads)
                .build_global();
        }
        run(cli.command, &cfg)
    });
    match result {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
