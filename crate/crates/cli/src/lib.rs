//! Experiment driver behind the `comprank` binary.

pub mod config;
pub mod output;
pub mod report;
pub mod run;

use std::path::Path;

use anyhow::{Context, Result};
use comprank::synth::{generate, write_dataset, SynthConfig};

pub use config::{Overrides, RunConfig};
pub use report::{cmd_report, ReportSummary};
pub use run::{cmd_run, RunManifest, RunSummary};

/// Generates a synthetic catalog into `out`.
pub fn cmd_synth(config: &SynthConfig, out: &Path) -> Result<()> {
    let ds = generate(config)?;
    write_dataset(&ds, out).with_context(|| format!("writing dataset to {}", out.display()))?;
    tracing::info!(
        items = ds.graph.item_count(),
        edges = ds.graph.edge_count(),
        out = %out.display(),
        "synthetic catalog written"
    );
    Ok(())
}
