use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use comprank::synth::SynthConfig;
use comprank_cli::config::RetrieverKind;
use comprank_cli::{cmd_report, cmd_run, cmd_synth, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "comprank",
    version,
    about = "LLM reranking experiments for complementary product recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog with planted complements.
    Synth(SynthArgs),
    /// Run retrieval, both reranking stages and evaluation.
    Run(RunArgs),
    /// Merge run directories into one table with cross-retriever lift.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    genres: usize,
    #[arg(long, default_value_t = 4.0)]
    edges_per_item: f64,
    #[arg(long, default_value_t = 3)]
    title_tokens_min: usize,
    #[arg(long, default_value_t = 6)]
    title_tokens_max: usize,
    #[arg(long, default_value_t = 40)]
    token_pool: usize,
    #[arg(long, default_value_t = 0.3)]
    cross_genre_ratio: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "data/synthetic")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pipeline sizes: fig1 (50/25) or fig2 (100/50).
    #[arg(long, value_parser = ["fig1", "fig2"])]
    preset: Option<String>,
    #[arg(long, value_enum)]
    retriever: Option<RetrieverKind>,
    /// Scores file for the precomputed retriever.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Method label used in reports.
    #[arg(long)]
    retriever_name: Option<String>,
    /// Mock both agents: identity, reverse, shuffle:<seed> or oracle.
    #[arg(long, conflicts_with_all = ["endpoint", "model"])]
    mock: Option<String>,
    /// OpenAI-compatible base URL for both agents.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    items: Option<PathBuf>,
    #[arg(long, requires = "items")]
    edges: Option<PathBuf>,
    #[arg(long)]
    dataset_name: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories produced by `comprank run`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Synth(a) => {
            let config = SynthConfig {
                n_items: a.items,
                n_genres: a.genres,
                edges_per_item: a.edges_per_item,
                title_tokens_min: a.title_tokens_min,
                title_tokens_max: a.title_tokens_max,
                token_pool_per_genre: a.token_pool,
                cross_genre_edge_ratio: a.cross_genre_ratio,
                seed: a.seed,
            };
            cmd_synth(&config, &a.out)
        }
        Command::Run(a) => {
            let mut config = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            config.apply(Overrides {
                preset: a.preset,
                retriever: a.retriever,
                scores: a.scores,
                retriever_name: a.retriever_name,
                mock: a.mock,
                endpoint: a.endpoint,
                model: a.model,
                seed: a.seed,
                out: a.out,
                items: a.items,
                edges: a.edges,
                dataset_name: a.dataset_name,
            });
            let summary = cmd_run(&config)?;
            println!(
                "{} queries evaluated, results in {}",
                summary.manifest.queries,
                summary.out.display()
            );
            Ok(())
        }
        Command::Report(a) => {
            let summary = cmd_report(&a.runs, &a.out)?;
            println!(
                "{} methods x {} datasets merged into {}",
                summary.methods.len(),
                summary.datasets.len(),
                a.out.display()
            );
            Ok(())
        }
    }
}
