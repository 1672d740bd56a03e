use std::process::ExitCode;

use clap::Parser;
use panelconv::cli::{execute, write_diagnostic, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PANELCONV_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            write_diagnostic(&cli.command.args().out, &e);
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
