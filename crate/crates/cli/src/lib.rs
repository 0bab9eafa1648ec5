//! Pipeline orchestration for the pendulum–rotator toolbox.
//!
//! A run is described by one JSON config (see [`config::RunConfig`]) and
//! produces a `report.json` plus per-pipeline artifacts (orbit files, field
//! CSVs, ledgers) under the output directory. Exit status encodes the
//! report rollup: 0 pass, 1 warn, 2 fail, 3 error.

pub mod config;
pub mod orbit;
pub mod pipelines;
pub mod report;

use std::path::Path;

use anyhow::Result;

use config::RunConfig;
use report::RunReport;

/// Options shared by all pipelines, mirroring the CLI flags.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: std::path::PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
    pub csv: bool,
    pub audit_every: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: std::path::PathBuf::from("out"),
            workers: None,
            seed: 0,
            csv: false,
            audit_every: 100,
        }
    }
}

/// Execute a run end to end: validate, compute, persist artifacts and the
/// report. Configuration errors surface as `Err` before any compute.
pub fn run(config: RunConfig, opts: &RunOptions) -> Result<RunReport> {
    if let Some(workers) = opts.workers {
        // Build the global pool once; subsequent calls in the same process
        // keep the first configuration.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    std::fs::create_dir_all(&opts.out_dir)?;
    let params = config.system.params()?;
    let mut report = RunReport::new(config.clone(), opts.seed);
    pipelines::execute(&params, &config.pipeline, opts, &mut report)?;
    write_report(&opts.out_dir, &report)?;
    Ok(report)
}

pub fn write_report(out_dir: &Path, report: &RunReport) -> Result<()> {
    let path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(path, text)?;
    Ok(())
}
