use std::process::ExitCode;

use geoshoot_cli::{parse_config, report_complexity, run_registration, CliError};

fn main() -> ExitCode {
    let env = std::env::vars().filter(|(k, _)| k.starts_with(geoshoot_cli::config::ENV_PREFIX));
    let cfg = match parse_config(std::env::args_os(), env) {
        Ok(cfg) => cfg,
        Err(CliError::Usage(e)) => e.exit(),
        Err(e) => {
            eprintln!("geoshoot: {e}");
            return ExitCode::from(2);
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = if cfg.complexity_report {
        report_complexity(&cfg, &mut stdout).map(|_| ())
    } else {
        run_registration(&cfg, &mut stdout).map(|_| ())
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("geoshoot: {e}");
            ExitCode::FAILURE
        }
    }
}
