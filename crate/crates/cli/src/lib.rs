//! Command-line pipeline around `qsta-core`: configuration, file formats,
//! stage commands and reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use log::{error, info, LevelFilter};

use crate::cli::{Cli, RunArgs};
use crate::commands::{run_stage, Ctx};
use crate::config::{load_config, OUTPUT_DIR_ENV};
use crate::error::CliResult;
use crate::report::emit_report;

/// Parses `argv`, runs the subcommand and returns the process exit status:
/// 0 success, 1 usage error, 2 runtime error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (stage, args) = cli.command.parts();
    init_logging(args);
    match execute(stage, args) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            e.exit_code()
        }
    }
}

fn init_logging(args: &RunArgs) {
    let level = match (args.quiet, args.verbose) {
        (true, _) => LevelFilter::Warn,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("QSTA_LOG").format_timestamp(None).try_init();
}

/// Output directory: `--out`, then the environment, then the config file.
pub fn output_dir(flag: Option<&PathBuf>, configured: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.clone();
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(configured),
    }
}

fn execute(stage: commands::Stage, args: &RunArgs) -> CliResult<()> {
    let mut cfg = load_config(&args.config, &args.overrides)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let dir = output_dir(args.out.as_ref(), &cfg.output_dir);
    let ctx = Ctx::new(cfg, dir)?;
    let report = run_stage(stage, &ctx)?;
    let files = emit_report(&report, &ctx.dir)?;
    for f in &files {
        info!("wrote {}", f.display());
    }
    Ok(())
}
