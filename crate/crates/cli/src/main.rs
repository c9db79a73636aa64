mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{BoCommand, Cli, Command, OutArgs, SurveyCommand};
use error::{CliError, EX_USAGE};
use manifest::Run;

fn execute<A: serde::Serialize>(
    name: &'static str,
    out: &OutArgs,
    args: &A,
    f: impl FnOnce(&mut Run, &A) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut run = Run::start(name, out, args)?;
    let result = f(&mut run, args);
    let written = run.finish(result.as_ref().err());
    result.and(written)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenDataset(a) => execute("gen-dataset", &a.out, a, commands::gen_dataset),
        Command::Survey(SurveyCommand::Gen(a)) => execute("survey gen", &a.out, a, commands::survey_gen),
        Command::Survey(SurveyCommand::Answer(a)) => execute("survey answer", &a.out, a, commands::survey_answer),
        Command::Grade(a) => execute("grade", &a.out, a, commands::grade),
        Command::FitUtility(a) => execute("fit-utility", &a.out, a, commands::fit_utility),
        Command::Bo(BoCommand::Run(a)) => execute("bo run", &a.out, a, commands::bo_run),
        Command::Bench(a) => execute("bench", &a.out, a, commands::bench),
        Command::TunePn(a) => execute("tune-pn", &a.out, a, commands::tune_pn),
        Command::Report(a) => execute("report", &a.out, a, commands::report),
        Command::ZeroShot(a) => execute("zero-shot", &a.out, a, commands::zero_shot),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EX_USAGE as u8),
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(EX_USAGE as u8);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("thread pool configured once");
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
