//! Command-line front end: `prepare`, `train`, `eval`, `analyze-pointers`,
//! `export-affinity` and `synth`.
//!
//! Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.

mod args;
mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::Cli;
pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mpcn::Error),
}

impl From<mpcn::Error> for CliError {
    fn from(e: mpcn::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(mpcn::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Parses `args` (program name first) and runs the command, writing results
/// to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    use args::Command;
    let ctx = commands::Ctx {
        seed: cli.seed,
        data_dir: cli.data_dir.clone(),
        json: cli.json,
    };
    match &cli.command {
        Command::Prepare(a) => commands::prepare(&ctx, a, out),
        Command::Train(a) => commands::train_cmd(&ctx, a, out, err),
        Command::Eval(a) => commands::eval(&ctx, a, out),
        Command::AnalyzePointers(a) => commands::analyze(&ctx, a, out),
        Command::ExportAffinity(a) => commands::export(&ctx, a, out),
        Command::Synth(a) => commands::synth(&ctx, a, out),
    }
}
