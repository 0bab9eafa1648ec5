use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use pendrot_cli::{config::RunConfig, run, RunOptions};

/// Pendulum–rotator pipelines: field scans, heteroclinic construction,
/// shadowing relaxations and their audit reports.
#[derive(Parser, Debug)]
#[command(name = "pendrot", version)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report and artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the parallel stages (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Seed recorded in the report (the pipelines are deterministic).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also emit CSV mirrors of binary artifacts.
    #[arg(long)]
    csv: bool,
    /// Audit cadence of relaxation runs, in steps.
    #[arg(long, default_value_t = 100)]
    audit_every: u64,
}

fn main() {
    let args = Args::parse();
    let started = Instant::now();
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(3);
        }
    };
    let opts = RunOptions {
        out_dir: args.out,
        workers: if args.workers == 0 {
            None
        } else {
            Some(args.workers)
        },
        seed: args.seed,
        csv: args.csv,
        audit_every: args.audit_every.max(1),
    };
    match run(config, &opts) {
        Ok(report) => {
            for item in &report.items {
                println!(
                    "{:<10} {:<24} measured {:>14.6e}  bound {:>14.6e}  {}",
                    format!("[{:?}]", item.status).to_lowercase(),
                    item.id,
                    item.measured,
                    item.bound,
                    item.message
                );
            }
            println!(
                "rollup: {:?}; {} artifacts in {}; wall clock {:.1?}",
                report.rollup,
                report.artifacts.len(),
                opts.out_dir.display(),
                started.elapsed()
            );
            std::process::exit(report.exit_code());
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(3);
        }
    }
}
