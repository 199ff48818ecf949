use std::process::ExitCode;

use clap::Parser;
use qurg_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("QURG_LOG")).init();
    // clap exits with 2 on usage errors and 0 for --help
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli.command) {
        Ok(result) => {
            if !result.summary.is_empty() {
                println!("{}", result.summary);
            }
            ExitCode::from(result.exit_code as u8)
        }
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
