//! Batch driver for the `gogiskip` binary: argument definitions, command
//! implementations, input discovery and a synthetic trace generator.

pub mod args;
pub mod commands;
pub mod io;
pub mod synth;

use anyhow::Result;
use gogiskip_core::Error as CoreError;

use crate::args::{Cli, Command};
use crate::io::{MissingInput, PartialFailure};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

/// Map an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<MissingInput>() {
            return EXIT_MISSING_INPUT;
        }
        if cause.is::<PartialFailure>() {
            return EXIT_PARTIAL;
        }
        if let Some(CoreError::Config { .. } | CoreError::ConfigFormat(_)) = cause.downcast_ref::<CoreError>() {
            return EXIT_CONFIG;
        }
    }
    EXIT_FAILURE
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers.filter(|&n| n > 0) {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::Tune(a) => commands::tune_cmd(a),
        Command::Stats(a) => commands::stats_cmd(a),
        Command::Surface(a) => commands::surface_cmd(a),
        Command::Layers(a) => commands::layers_cmd(a),
        Command::Ablate(a) => commands::ablate_cmd(a),
        Command::Synth(a) => commands::synth_cmd(a),
    })
}
