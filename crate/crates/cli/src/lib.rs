//! The `tec` command-line pipeline: corpus, mixing, NLMS, training,
//! enhancement, evaluation, FLOPS and the end-to-end demo.

pub mod args;
pub mod commands;
pub mod demo;
pub mod error;
pub mod meta;
pub mod pipeline;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use error::{Error, Result};

use args::Command;
use meta::Logger;

/// Runs one parsed invocation inside a pool of `--threads` workers.
pub fn execute(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if cli.global.threads > 0 {
        pool = pool.num_threads(cli.global.threads);
    }
    let pool = pool.build()?;
    let log = Logger { level: cli.global.log_level };
    let g = &cli.global;
    pool.install(|| match &cli.command {
        Command::Mix(a) => commands::mix(a, g, &log),
        Command::Nlms(a) => commands::nlms(a, g, &log),
        Command::Train(a) => commands::train(a, g, &log),
        Command::Enhance(a) => commands::enhance(a, g, &log),
        Command::Eval(a) => commands::eval(a, g, &log),
        Command::Flops(a) => commands::flops(a, g, &log),
        Command::Demo(a) => commands::demo(a, g, &log),
        Command::Corpus(a) => commands::corpus(a, g, &log),
    })
}

/// Error line printed on failure: `error: <message>` on a single line.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error: {msg}")
}

/// Exit code for `argv`: 0 success, 1 domain error, 2 usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}
