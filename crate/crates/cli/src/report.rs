//! `report`: merge several run directories into one method-by-dataset table
//! and cross-retriever lift statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use comprank::metrics::{lift_table, LiftRow, Metric, MetricsRow};
use comprank::pipeline::Stage;

use crate::output::{read_json, write_csv, write_json};
use crate::run::{RunManifest, LIFT_CSV, LIFT_JSON, MANIFEST_FILE, METRICS_CSV, METRICS_JSON};

pub const TABLE_CSV: &str = "table.csv";

#[derive(Debug)]
pub struct ReportSummary {
    pub datasets: Vec<String>,
    pub methods: Vec<String>,
    pub metrics: Vec<MetricsRow>,
    /// Header row followed by one row per (method, stage, K).
    pub table: Vec<Vec<String>>,
    pub lifts: Vec<LiftRow>,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<ReportSummary> {
    if runs.is_empty() {
        bail!("report needs at least one run directory");
    }

    let mut first: Option<(PathBuf, RunManifest)> = None;
    let mut seen_pairs = BTreeSet::new();
    let mut methods: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut coverage: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut rows: Vec<MetricsRow> = Vec::new();

    for dir in runs {
        let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))
            .with_context(|| format!("{} is not a run directory", dir.display()))?;
        let metrics: Vec<MetricsRow> = read_json(&dir.join(METRICS_JSON))?;

        if let Some((p0, m0)) = &first {
            if m0.cutoffs != manifest.cutoffs {
                bail!(
                    "cutoff mismatch: {} uses {:?} but {} uses {:?}",
                    p0.display(),
                    m0.cutoffs,
                    dir.display(),
                    manifest.cutoffs
                );
            }
            if (m0.n_div, m0.n_acc) != (manifest.n_div, manifest.n_acc) {
                bail!(
                    "pipeline size mismatch: {} uses {}/{} but {} uses {}/{}",
                    p0.display(),
                    m0.n_div,
                    m0.n_acc,
                    dir.display(),
                    manifest.n_div,
                    manifest.n_acc
                );
            }
        } else {
            first = Some((dir.clone(), manifest.clone()));
        }
        if !seen_pairs.insert((manifest.retriever.clone(), manifest.dataset.clone())) {
            bail!(
                "retriever {:?} on dataset {:?} appears in more than one run",
                manifest.retriever,
                manifest.dataset
            );
        }
        if !methods.contains(&manifest.retriever) {
            methods.push(manifest.retriever.clone());
        }
        if !datasets.contains(&manifest.dataset) {
            datasets.push(manifest.dataset.clone());
        }
        coverage
            .entry(manifest.dataset.clone())
            .or_default()
            .insert(manifest.retriever.clone());
        rows.extend(metrics);
    }

    let expected: BTreeSet<String> = methods.iter().cloned().collect();
    for (ds, have) in &coverage {
        if *have != expected {
            bail!("inconsistent datasets: {ds:?} has retrievers {have:?}, expected {expected:?}");
        }
    }
    let cutoffs = first.expect("at least one run").1.cutoffs;

    let index: BTreeMap<(&str, &str, Stage, usize), &MetricsRow> = rows
        .iter()
        .map(|r| ((r.method.as_str(), r.dataset.as_str(), r.stage, r.k), r))
        .collect();

    let mut header = vec!["method".to_string(), "stage".to_string(), "K".to_string()];
    for ds in &datasets {
        for m in Metric::ALL {
            header.push(format!("{ds}:{}", m.as_str()));
        }
    }
    let mut table = vec![header];
    for method in &methods {
        for stage in Stage::ALL {
            for &k in &cutoffs {
                let mut line = vec![method.clone(), stage.to_string(), k.to_string()];
                for ds in &datasets {
                    let row = index
                        .get(&(method.as_str(), ds.as_str(), stage, k))
                        .with_context(|| format!("{method}/{ds} has no {stage} row at K={k}"))?;
                    line.extend(Metric::ALL.map(|m| fmt(row.get(m))));
                }
                table.push(line);
            }
        }
    }

    let lifts = lift_table(&rows);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = csv::Writer::from_path(out.join(TABLE_CSV))?;
    for line in &table {
        w.write_record(line)?;
    }
    w.flush()?;
    write_csv(&out.join(METRICS_CSV), &rows)?;
    write_json(&out.join(METRICS_JSON), &rows)?;
    write_csv(&out.join(LIFT_CSV), &lifts)?;
    write_json(&out.join(LIFT_JSON), &lifts)?;

    Ok(ReportSummary {
        datasets,
        methods,
        metrics: rows,
        table,
        lifts,
    })
}
