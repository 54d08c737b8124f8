use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use degensim::app::{self, OUTPUT_ENV};
use degensim::config::parse_config;
use degensim::verify::{run_suite, Suite};

/// Implicit finite-volume solver for degenerate and singular
/// reaction-diffusion equations.
#[derive(Parser)]
#[command(name = "degensim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation; writes trace.csv and snapshot files.
    Run { config: PathBuf },
    /// Run the property checks; writes verify_report.csv.
    Verify {
        #[arg(long, default_value = "all", value_parser = parse_suite)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Refinement study against a finer reference run; writes convergence.csv.
    Convergence {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).map_err(|e| e.to_string())
}

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY: u8 = 3;

fn code(c: i32) -> ExitCode {
    ExitCode::from(c.clamp(0, 255) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run { config } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match app::run(&cfg) {
                Ok(summary) => {
                    println!(
                        "{} of {} steps, max u = {:.6}, output in {}",
                        summary.completed,
                        summary.steps,
                        summary.max_u,
                        summary.directory.display()
                    );
                    if let Some(e) = &summary.failure {
                        eprintln!("solver stopped: {e}");
                    }
                    code(summary.exit_code())
                }
                Err(e) => {
                    eprintln!("{e}");
                    code(e.exit_code())
                }
            }
        }
        Command::Verify { suite, seed } => {
            let report = run_suite(suite, seed);
            for e in &report.entries {
                println!(
                    "{:<36} {:<4} margin {:>12.4e}  {:.2}s  {}",
                    e.check,
                    if e.passed { "pass" } else { "FAIL" },
                    e.margin,
                    e.runtime_s,
                    e.instance
                );
            }
            let dir = std::env::var_os(OUTPUT_ENV)
                .filter(|d| !d.is_empty())
                .map_or_else(|| PathBuf::from("out"), PathBuf::from);
            let written = std::fs::create_dir_all(&dir)
                .map_err(degensim::Error::from)
                .and_then(|_| report.write_csv(&dir.join("verify_report.csv")));
            if let Err(e) = written {
                eprintln!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Command::Convergence { config, levels } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let table = match app::convergence(&cfg, levels) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{e}");
                    return code(e.exit_code());
                }
            };
            let csv = table.to_csv();
            print!("{csv}");
            let dir = app::output_dir(&cfg);
            let written = std::fs::create_dir_all(&dir)
                .and_then(|_| std::fs::write(dir.join("convergence.csv"), &csv));
            if let Err(e) = written {
                eprintln!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            ExitCode::SUCCESS
        }
    }
}
