pub mod cli;
pub mod commands;
pub mod replay;
pub mod service;
pub mod svg;

use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

/// Exit status for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;
/// Exit status when a command fails for a reason other than its result.
pub const EXIT_ERROR: i32 = 70;

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(match parsed.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        })
        .parse_default_env()
        .try_init();
    match commands::dispatch(&parsed, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}
