//! Two-stage LLM reranking for complementary product recommendation.
//!
//! A baseline [`retriever`] narrows the catalog to a candidate list, a
//! diversity agent reranks it, and an accuracy agent refines the head of the
//! diversified list ([`pipeline`]). [`metrics`] scores every stage on
//! Hit@K, NDCG@K, title-token entropy and vocabulary size, and computes
//! percent lift between stages. [`synth`] builds catalogs with planted
//! complements so the whole flow runs offline against [`agents::MockAgent`].

pub mod agents;
pub mod catalog;
pub mod metrics;
pub mod pipeline;
pub mod retriever;
pub mod synth;

pub use agents::{Agent, AgentError, AgentKind, LlmConfig, MockAgent, OpenAiClient};
pub use catalog::{
    load_catalog, split_holdout, CatalogError, ComplementGraph, Item, QueryInstance,
};
pub use metrics::{LiftRow, MetricsRow};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, RankedList, Stage, StageAgents};
pub use retriever::{CandidateList, HeuristicRetriever, PrecomputedRetriever, Retriever};
