use std::process::ExitCode;

use clap::Parser;
use walksolve_cli::{commands, exit, Cli};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(commands::run(cli)),
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            ExitCode::from(if e.use_stderr() { exit::FAILURE } else { exit::OK })
        }
    }
}
