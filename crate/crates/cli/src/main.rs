mod args;
mod commands;
mod config;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Threads};
use config::{resolve, RunConfig, PRESETS};
use error::CliError;
use report::{write_report, Outcome};

fn in_pool<F>(config: &RunConfig, f: F) -> Result<Outcome, CliError>
where
    F: FnOnce() -> Result<Outcome, CliError> + Send,
{
    let n = match config.threads {
        Threads::Count(n) => n,
        Threads::Auto(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?;
    pool.install(f)
}

fn run(cli: Cli) -> Result<(), CliError> {
    macro_rules! dispatch {
        ($args:expr, |$p:ident, $cfg:ident| $body:expr) => {{
            let ($p, $cfg) = resolve(&cli, $args)?;
            let outcome = in_pool(&$cfg, || $body)?;
            write_report(&$cfg, &outcome, cli.plot)
        }};
    }
    match &cli.command {
        Command::Kernel(a) => dispatch!(a, |p, cfg| commands::kernel(p)),
        Command::Spectrum(a) => dispatch!(a, |p, cfg| commands::spectrum(p)),
        Command::Thresholds(a) => dispatch!(a, |p, cfg| commands::thresholds(p)),
        Command::Gamma(a) => dispatch!(a, |p, cfg| commands::gamma(p)),
        Command::Branch(a) => dispatch!(a, |p, cfg| commands::branch(p)),
        Command::Simulate(a) => dispatch!(a, |p, cfg| commands::simulate(p, cfg.seed)),
        Command::Equilibrium(a) => dispatch!(a, |p, cfg| commands::equilibrium(p, cfg.seed)),
        Command::StabilityMap(a) => dispatch!(a, |p, cfg| commands::stability(p)),
        Command::Iota(a) => dispatch!(a, |p, cfg| commands::iota_table(p)),
        Command::Presets => {
            for p in PRESETS {
                println!("{:<14} {:<14} {}", p.name, p.command, p.about);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
