use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use elitist_core::cli::{load_config, run, Cli};

fn exit_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<elitist_core::Error>()
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = (|| -> anyhow::Result<()> {
        let cfg = load_config(&cli)?;
        if let Some(jobs) = cli.jobs.or(cfg.jobs) {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .context("configuring the worker pool")?;
        }
        run(&cli, &cfg)?;
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already name their cause.
            match e.downcast_ref::<elitist_core::Error>() {
                Some(lib) => eprintln!("error: {lib}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
