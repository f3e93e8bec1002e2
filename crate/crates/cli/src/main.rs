use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esbgk_cli::commands::format_checks;
use esbgk_cli::config::ConfigError;
use esbgk_cli::{cmd_check, cmd_converge, cmd_run, parse_with_env, CliError, Invocation};

#[derive(Parser)]
#[command(name = "esbgk", version, about = "Semi-Lagrangian ES-BGK solver")]
struct Cli {
    /// JSON configuration; defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Reserved; every algorithm is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance the configured problem and write diagnostics and the final state.
    Run,
    /// Measure the observed order on the configured refinement ladder.
    Converge,
    /// Run the invariant suite and print a pass/fail table.
    Check,
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut cfg = parse_with_env(&text, std::env::vars())?;
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    let inv = Invocation { seed: cli.seed };
    let dir = cfg.output.dir.clone();
    match cli.command {
        Command::Run => {
            let summary = cmd_run(&cfg, &dir, &inv)?;
            let last = summary.rows.last().expect("initial row");
            println!(
                "run: {} steps, eps_quad={:.3e}, mass={:.17e}, min_f={:.3e}; outputs in {}",
                last.step,
                summary.eps_quad,
                last.mass,
                last.min_f,
                dir.display()
            );
            Ok(true)
        }
        Command::Converge => {
            let report = cmd_converge(&cfg, &dir, &inv)?;
            for l in &report.levels {
                println!("dt={:.6e} error={:.6e} local_order={:?}", l.dt, l.error, l.local_order);
            }
            match report.order {
                Some(p) => println!("observed order {p:.4}"),
                None => println!("observed order: degenerate fit"),
            }
            Ok(true)
        }
        Command::Check => {
            let results = cmd_check(&cfg)?;
            print!("{}", format_checks(&results));
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
