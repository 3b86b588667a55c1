use std::io::Write;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use gw_cli::io::write_text;
use gw_cli::{run, Cli, CliResult};

fn fresh_seed() -> u64 {
    let t = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    t.as_secs().wrapping_mul(1_000_000_007) ^ u64::from(t.subsec_nanos())
}

fn execute(mut cli: Cli) -> CliResult<bool> {
    if let Some(seed) = cli.command.seed_mut() {
        if seed.is_none() {
            let s = fresh_seed();
            eprintln!("seed: {s} (pass --seed {s} to replay)");
            *seed = Some(s);
        }
    }
    let started = Instant::now();
    let report = run(&cli.command)?;
    log::info!("{} finished in {:.2?}", report.command, started.elapsed());
    let json = report.to_json()?;
    if let Some(path) = &cli.out {
        write_text(path, &json)?;
    }
    let text = if cli.json { json } else { report.to_table() };
    let mut stdout = std::io::stdout().lock();
    // a closed pipe is not an error worth reporting
    let _ = stdout.write_all(text.as_bytes());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
