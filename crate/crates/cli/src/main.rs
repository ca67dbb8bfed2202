use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robin_ddm::config::RunConfig;
use robin_ddm::report::{compare_reports, run_experiment, ReportError};

#[derive(Parser)]
#[command(name = "robin-ddm", version, about = "Decomposed physics-constrained network solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a configured problem and write run artifacts
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// `section.key=value`, repeatable
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Compare the final max errors of two report.csv files
    Compare {
        first: PathBuf,
        second: PathBuf,
        /// relative difference treated as a tie
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            out,
            mut overrides,
        } => {
            if let Some(seed) = seed {
                overrides.push(format!("run.seed={seed}"));
            }
            if let Some(out) = out {
                overrides.push(format!("run.output={}", toml_escape(&out.display().to_string())));
            }
            let result = RunConfig::load(&config, &overrides)
                .map_err(ReportError::from)
                .and_then(|c| run_experiment(&c));
            match result {
                Ok(done) => {
                    let e = done.outcome.errors();
                    println!(
                        "max relative L2 {:.6e}, max abs {:.6e}; artifacts in {}",
                        e.max_rel_l2,
                        e.max_abs,
                        done.output.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Compare {
            first,
            second,
            tolerance,
        } => match compare_reports(&first, &second, tolerance) {
            Ok(c) => {
                println!("{c}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}

fn fail(e: ReportError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

/// Quoted TOML basic string.
fn toml_escape(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
