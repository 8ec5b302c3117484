use clap::Parser;
use convexrisk_cli::config::RunConfig;
use convexrisk_cli::run;
use std::io::Write;

fn main() {
    let cfg = RunConfig::parse();
    let out = run(&cfg);
    if let Some(msg) = &out.diagnostic {
        eprintln!("{msg}");
    }
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, &out.body),
        None => std::io::stdout().write_all(out.body.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        std::process::exit(1);
    }
    std::process::exit(out.exit_code);
}
