use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use poolsel_cli::{cmd_bench, cmd_run, cmd_stage, resolve, Cli, Command};
use poolsel_core::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // 2 when the pools simply leave nothing to select
            let nothing = matches!(
                e.downcast_ref::<Error>(),
                Some(Error::EmptySelection | Error::NoReports | Error::EmptyPool(_))
            );
            ExitCode::from(if nothing { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Run(flags) => {
            let s = resolve(flags, config)?;
            let sum = cmd_run(&s)?;
            let rep = &sum.selection.report;
            let f = &sum.filtered;
            let (ns, ni, nt) = (s.pipeline.n_solvers, s.pipeline.n_instances, s.pipeline.n_tests);
            println!("selected   {} (g = {:.6})", rep.chosen, rep.solvers[rep.chosen_index].g);
            println!(
                "retained   {}/{ns} solvers, {}/{ni} instances, {}/{nt} tests ({} non-interpretable triples)",
                f.solution.solvers.len(),
                f.solution.instances.len(),
                f.solution.tests.len(),
                f.bad_triples
            );
            println!("em         {} iterations", sum.iterations);
            println!("artifacts  {}", s.artifacts().dir.display());
        }
        Command::Stage { stage, flags } => {
            let s = resolve(flags, config)?;
            cmd_stage((*stage).into(), &s)?;
            println!("artifacts  {}", s.artifacts().dir.display());
        }
        Command::Bench(flags) => {
            let s = resolve(flags, config)?;
            let result = cmd_bench(&s)?;
            let stdout = std::io::stdout();
            result.write_csv(stdout.lock())?;
            stdout.lock().flush()?;
            eprintln!("wrote {}", s.csv.display());
        }
    }
    Ok(())
}
