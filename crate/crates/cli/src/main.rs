use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homog_core::field::BUILTINS;
use homog_core::run_config_file;

#[derive(Parser)]
#[command(name = "homog", about = "Runs homogenization experiments described by TOML config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment in a config file and write its report.
    Run { config: PathBuf },
    /// List the builtin fields and their parameters.
    ListBuiltins,
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let outcome = run_config_file(&config);
            if let Some(report) = &outcome.report {
                let r = &report.report;
                println!("experiment {}", report.experiment);
                println!("{:>14} {:>14} {:>14}", "eps", "error", "reference");
                for e in &r.entries {
                    let reference = e.reference.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
                    println!("{:>14.6e} {:>14.6e} {:>14}", e.eps, e.error, reference);
                }
                println!("slope {:.4}  intercept {:.4}  R^2 {:.6}", r.fit.slope, r.fit.intercept, r.fit.r_squared);
                for c in &r.checks {
                    println!("check {} = {:.3e} (limit {:.3e}) {}", c.name, c.value, c.limit, if c.pass { "ok" } else { "FAILED" });
                }
                for w in &r.warnings {
                    println!("warning: {w}");
                }
                println!("{} -> {}", if report.pass { "PASS" } else { "FAIL" }, outcome.output_dir.display());
            }
            if let Some(err) = &outcome.error {
                eprintln!("error: {err}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Command::ListBuiltins => {
            for (name, description) in BUILTINS {
                println!("{name}\n    {description}");
            }
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!("homog {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
