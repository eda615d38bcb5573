//! `run`: split, retrieve, rerank and evaluate one (dataset, retriever) pair.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use comprank::agents::{Agent, MockAgent, MockPolicy, OpenAiClient};
use comprank::catalog::{load_catalog, split_holdout, ComplementGraph, QueryInstance};
use comprank::metrics::{aggregate, evaluate_list, lift_table, LiftRow, MetricsRow, QueryMetrics};
use comprank::pipeline::{run_queries, QueryOutcome, Stage, StageAgents};
use comprank::retriever::{HeuristicRetriever, PrecomputedRetriever, Retriever};
use comprank::synth::{generate, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::config::{RetrieverKind, RunConfig, Transport};
use crate::output::{write_csv, write_json, write_jsonl};

pub const MANIFEST_FILE: &str = "run.json";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const RETRIEVAL_FILE: &str = "retrieval.jsonl";
pub const STAGES_FILE: &str = "stages.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const PER_QUERY_FILE: &str = "per_query.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const LIFT_CSV: &str = "lift.csv";
pub const LIFT_JSON: &str = "lift.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: String,
    pub retriever: String,
    pub n_div: usize,
    pub n_acc: usize,
    pub cutoffs: Vec<usize>,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub items: usize,
    pub train_edges: usize,
    pub queries: usize,
    pub diversity_agent: String,
    pub accuracy_agent: String,
    /// Queries where an agent call failed and the stage kept its input order.
    pub failed_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerQueryRow {
    pub method: String,
    pub dataset: String,
    pub stage: Stage,
    pub query_id: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub hit: f64,
    pub ndcg: f64,
    pub entropy: f64,
    pub vocab: usize,
}

#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: RunManifest,
    pub metrics: Vec<MetricsRow>,
    pub lifts: Vec<LiftRow>,
}

fn load_graph(cfg: &RunConfig) -> Result<ComplementGraph> {
    match (&cfg.dataset.items, &cfg.dataset.edges) {
        (Some(items), Some(edges)) => Ok(load_catalog(items, edges)?),
        _ => {
            let synth = cfg.dataset.synth.clone().unwrap_or(SynthConfig {
                seed: cfg.seed,
                ..SynthConfig::default()
            });
            Ok(generate(&synth)?.graph)
        }
    }
}

fn describe(t: &Transport) -> String {
    match t {
        Transport::Mock(MockPolicy::Identity) => "mock:identity".into(),
        Transport::Mock(MockPolicy::Reverse) => "mock:reverse".into(),
        Transport::Mock(MockPolicy::SeededShuffle(s)) => format!("mock:shuffle:{s}"),
        Transport::Mock(MockPolicy::Oracle(_)) => "mock:oracle".into(),
        Transport::Endpoint(e) => format!("endpoint:{}@{}", e.model, e.base_url),
    }
}

fn build_agent(t: &Transport, queries: &[QueryInstance]) -> Result<Box<dyn Agent>> {
    Ok(match t {
        Transport::Mock(MockPolicy::Oracle(_)) => Box::new(MockAgent::oracle(
            queries
                .iter()
                .map(|q| (q.query_id.clone(), q.ground_truth.clone())),
        )),
        Transport::Mock(p) => Box::new(MockAgent::new(p.clone())),
        Transport::Endpoint(e) => Box::new(OpenAiClient::new(e.clone())?),
    })
}

pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let out = cfg.out.clone().context("no output directory")?;
    let pipeline = cfg.pipeline.resolve()?;
    let dataset = cfg.dataset_name();
    let method = cfg.retriever_name();

    let graph = load_graph(cfg)?;
    let (train, queries) = split_holdout(&graph, cfg.holdout_fraction, cfg.seed)?;

    let retriever: Box<dyn Retriever + '_> = match cfg.retriever.kind {
        RetrieverKind::Heuristic => Box::new(
            HeuristicRetriever::new(&train)
                .with_weights(cfg.retriever.weights)
                .exclude_neighbors(cfg.retriever.exclude_train_neighbors)
                .with_name(method.clone()),
        ),
        RetrieverKind::Precomputed => {
            let path = cfg.retriever.path.as_ref().context("no scores path")?;
            Box::new(
                PrecomputedRetriever::load(path)
                    .with_context(|| format!("loading scores file {}", path.display()))?
                    .with_name(method.clone()),
            )
        }
    };

    let div_t = cfg.agents.diversity.transport("diversity")?;
    let acc_t = cfg.agents.accuracy.transport("accuracy")?;
    let div_agent = build_agent(&div_t, &queries)?;
    let acc_agent = build_agent(&acc_t, &queries)?;
    let agents = StageAgents {
        diversity: div_agent.as_ref(),
        accuracy: acc_agent.as_ref(),
    };

    let results = run_queries(
        &queries,
        &graph,
        retriever.as_ref(),
        agents,
        &pipeline,
        cfg.max_in_flight,
    )?;
    let outcomes: Vec<QueryOutcome> = results
        .into_iter()
        .collect::<Result<_, _>>()
        .context("pipeline aborted")?;

    let title_of = |id: &str| graph.item(id).map(|i| i.title.as_str()).unwrap_or("");
    let mut per_query_rows = Vec::new();
    let mut metrics = Vec::new();
    for stage in Stage::ALL {
        let per_query: Vec<QueryMetrics> = outcomes
            .iter()
            .flat_map(|o| {
                evaluate_list(
                    &o.query.query_id,
                    &o.list(stage).order,
                    &o.query.ground_truth,
                    &pipeline.cutoffs,
                    title_of,
                )
            })
            .collect();
        metrics.extend(aggregate(
            &per_query,
            &method,
            stage,
            &dataset,
            &pipeline.cutoffs,
        )?);
        per_query_rows.extend(per_query.into_iter().map(|q| PerQueryRow {
            method: method.clone(),
            dataset: dataset.clone(),
            stage,
            query_id: q.query_id,
            k: q.k,
            hit: q.hit,
            ndcg: q.ndcg,
            entropy: q.entropy,
            vocab: q.vocab,
        }));
    }
    let lifts = lift_table(&metrics);

    let manifest = RunManifest {
        dataset,
        retriever: method,
        n_div: pipeline.n_div,
        n_acc: pipeline.n_acc,
        cutoffs: pipeline.cutoffs.clone(),
        seed: cfg.seed,
        holdout_fraction: cfg.holdout_fraction,
        items: graph.item_count(),
        train_edges: train.edge_count(),
        queries: outcomes.len(),
        diversity_agent: describe(&div_t),
        accuracy_agent: describe(&acc_t),
        failed_queries: outcomes
            .iter()
            .filter(|o| o.failed())
            .map(|o| o.query.query_id.clone())
            .collect(),
    };

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    write_jsonl(&out.join(QUERIES_FILE), &queries)?;
    write_jsonl(
        &out.join(RETRIEVAL_FILE),
        outcomes.iter().map(|o| &o.retrieval),
    )?;
    write_jsonl(
        &out.join(STAGES_FILE),
        outcomes.iter().flat_map(|o| o.stage_records()),
    )?;
    if cfg.audit.unwrap_or_else(|| cfg.uses_endpoint()) {
        write_jsonl(
            &out.join(AUDIT_FILE),
            outcomes.iter().flat_map(|o| o.audit_records()),
        )?;
    }
    write_csv(&out.join(PER_QUERY_FILE), &per_query_rows)?;
    write_csv(&out.join(METRICS_CSV), &metrics)?;
    write_json(&out.join(METRICS_JSON), &metrics)?;
    write_csv(&out.join(LIFT_CSV), &lifts)?;
    write_json(&out.join(LIFT_JSON), &lifts)?;

    tracing::info!(
        queries = manifest.queries,
        failed = manifest.failed_queries.len(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        out = %out.display(),
        "run complete"
    );
    Ok(RunSummary {
        out,
        manifest,
        metrics,
        lifts,
    })
}
