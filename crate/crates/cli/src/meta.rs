//! Reproducibility record and progress output.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::args::{GlobalArgs, LogLevel};
use crate::error::Result;

pub const RUN_META: &str = "run.meta";

#[derive(Serialize)]
struct RunMeta<'a, A: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    global: &'a GlobalArgs,
    args: &'a A,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved: Option<&'a R>,
}

/// Writes `<dir>/run.meta`: the command, its arguments and the resolved
/// configuration it ran with.
pub fn write_run_meta<A: Serialize, R: Serialize>(
    dir: &Path,
    command: &str,
    global: &GlobalArgs,
    args: &A,
    resolved: Option<&R>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = RunMeta { tool: "tec", version: env!("CARGO_PKG_VERSION"), command, global, args, resolved };
    fs::write(dir.join(RUN_META), toml::to_string(&meta)?)?;
    Ok(())
}

/// Progress messages on stderr, filtered by level.
#[derive(Debug, Clone, Copy)]
pub struct Logger {
    pub level: LogLevel,
}

impl Logger {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.level >= LogLevel::Info {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn debug(&self, msg: impl AsRef<str>) {
        if self.level >= LogLevel::Debug {
            eprintln!("{}", msg.as_ref());
        }
    }
}
