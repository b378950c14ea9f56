use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gwap_cli::serve_game;
use gwap_core::session::{
    analyze_session, simulate_session, write_results, Criteria, SessionConfig, CRITERIA,
    VALIDATION_SEED,
};

#[derive(Parser)]
#[command(
    name = "gwap",
    version,
    about = "Match-3 BCI game: simulate, analyze, serve, validate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated session and write its archive.
    Simulate {
        /// Session configuration (JSON); omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze a recorded session into tables and a summary.
    Analyze {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play one live session with a display client over WebSocket.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        record: PathBuf,
    },
    /// Run the acceptance criteria; exits nonzero if any fails.
    Validate {
        #[arg(long)]
        out: PathBuf,
        /// Override the substitution probability used by the injection check.
        #[arg(long)]
        errp_probability: Option<f64>,
        /// Run only the named criteria.
        #[arg(long, num_args = 1.., value_parser = clap::builder::PossibleValuesParser::new(CRITERIA))]
        only: Vec<String>,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SessionConfig> {
    let Some(path) = path else {
        return Ok(SessionConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn validate(out: &Path, errp_probability: Option<f64>, only: &[String]) -> anyhow::Result<bool> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut criteria = Criteria::new(VALIDATION_SEED, out);
    if let Some(p) = errp_probability {
        criteria = criteria.with_errp_probability(p);
    }
    let mut results = Vec::new();
    for name in CRITERIA {
        if !only.is_empty() && !only.iter().any(|n| n == name) {
            continue;
        }
        let r = criteria.run(name).expect("known criterion");
        println!("{}", r.line());
        results.push(r);
    }
    write_results(out, &results)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    Ok(failed == 0)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let archive = simulate_session(&cfg, &out)?;
            println!(
                "{}: {} events written to {}",
                archive.session_id,
                archive.events.len(),
                out.display()
            );
        }
        Command::Analyze { session, out } => {
            let report = analyze_session(&session, &out)?;
            if let Some(analyses) = report.summary["analyses"].as_object() {
                for (name, a) in analyses {
                    let status = a["status"].as_str().unwrap_or("?");
                    match a["reason"].as_str() {
                        Some(reason) => println!("{name}: {status} ({reason})"),
                        None => println!("{name}: {status}"),
                    }
                }
            }
            println!("report written to {}", report.dir.display());
        }
        Command::Serve {
            config,
            port,
            record,
        } => {
            let cfg = load_config(config.as_deref())?;
            let rt = tokio::runtime::Runtime::new()?;
            let outcome = rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                serve_game(listener, cfg, &record).await
            })?;
            println!(
                "{} ended ({}): {} events recorded to {}",
                outcome.session_id,
                outcome.end_reason,
                outcome.events,
                outcome.record.display()
            );
        }
        Command::Validate {
            out,
            errp_probability,
            only,
        } => return validate(&out, errp_probability, &only),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
