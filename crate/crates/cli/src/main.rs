mod analyze;
mod args;
mod curve;
mod error;
mod report;
mod simulate;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Format};
use error::CliError;

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Analyze(a) => {
            let report = analyze::run(a)?;
            let text = match a.format {
                Format::Json => report.to_json() + "\n",
                Format::Csv => report.to_csv(),
                Format::Table => report.to_table(),
            };
            print!("{text}");
        }
        Command::SelectionCurve(a) => {
            let report = curve::run(a)?;
            if !report.converged {
                eprintln!("warning: the selection model did not converge; curve uses the best point found");
            }
            print!("{}", report.render(a.format));
        }
        Command::Simulate(a) => simulate::run(a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
