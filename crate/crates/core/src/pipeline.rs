//! Retrieve, rerank for diversity, truncate, rerank for accuracy.
//!
//! Every query yields three stage-tagged lists so each stage can be
//! evaluated on its own:
//!
//! * `base`: retriever top `n_div`,
//! * `diversity`: the diversity agent's permutation of `base`,
//! * `diversity_accuracy`: the accuracy agent's permutation of the first
//!   `n_acc` items of `diversity`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_prompt_with_limit, parse_permutation, Agent, AgentError, AgentKind, Repair,
    DEFAULT_MAX_CANDIDATES,
};
use crate::catalog::{ComplementGraph, Item, QueryInstance};
use crate::metrics::DEFAULT_CUTOFFS;
use crate::retriever::{CandidateList, RetrieveError, Retriever};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("query {query}: retrieval failed: {source}")]
    Retrieve {
        query: String,
        #[source]
        source: RetrieveError,
    },
    #[error("query {query}: retriever returned no candidates")]
    EmptyPool { query: String },
    #[error("query {query}: item {id:?} is not in the catalog")]
    UnknownItem { query: String, id: String },
    #[error("query {query}: {stage} stage failed: {source}")]
    Stage {
        query: String,
        stage: Stage,
        #[source]
        source: AgentError,
    },
    #[error("query {query}: {stage} list violates invariants: {reason}")]
    Invariant {
        query: String,
        stage: Stage,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Base,
    Diversity,
    DiversityAccuracy,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Base, Stage::Diversity, Stage::DiversityAccuracy];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Base => "base",
            Stage::Diversity => "diversity",
            Stage::DiversityAccuracy => "diversity_accuracy",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// What to do when an agent call still fails after its retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Keep the stage input order and flag the query.
    #[default]
    Identity,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_div: usize,
    pub n_acc: usize,
    pub cutoffs: Vec<usize>,
    pub on_failure: FailurePolicy,
    pub max_prompt_candidates: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::fig1()
    }
}

impl PipelineConfig {
    /// Diversity agent over the top 50, accuracy agent over the top 25.
    pub fn fig1() -> Self {
        PipelineConfig {
            n_div: 50,
            n_acc: 25,
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            on_failure: FailurePolicy::Identity,
            max_prompt_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }

    /// Diversity agent over the top 100, accuracy agent over the top 50.
    pub fn fig2() -> Self {
        PipelineConfig {
            n_div: 100,
            n_acc: 50,
            ..Self::fig1()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "fig1" => Some(Self::fig1()),
            "fig2" => Some(Self::fig2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.n_acc == 0 {
            return bad("n_acc must be positive".into());
        }
        if self.n_acc > self.n_div {
            return bad(format!(
                "n_acc ({}) exceeds n_div ({})",
                self.n_acc, self.n_div
            ));
        }
        if self.n_div > self.max_prompt_candidates {
            return bad(format!(
                "n_div ({}) exceeds max_prompt_candidates ({})",
                self.n_div, self.max_prompt_candidates
            ));
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return bad("cutoffs must be a nonempty set of positive values".into());
        }
        let max_k = *self.cutoffs.iter().max().expect("nonempty");
        if max_k > self.n_acc {
            return bad(format!(
                "largest cutoff ({max_k}) exceeds n_acc ({})",
                self.n_acc
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub stage: Stage,
    pub order: Vec<String>,
}

impl RankedList {
    /// No duplicates and no self-recommendation.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for id in &self.order {
            if *id == self.query_id {
                return Err(format!("contains the query item {id:?}"));
            }
            if !seen.insert(id.as_str()) {
                return Err(format!("repeats {id:?}"));
            }
        }
        Ok(())
    }
}

/// Result of one agent stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub list: RankedList,
    pub repairs: BTreeSet<Repair>,
    pub prompt: String,
    /// Raw completion; `None` when the call failed.
    pub response: Option<String>,
    /// Transport error that forced the identity fallback.
    pub failure: Option<String>,
}

/// Serialized per-query, per-stage result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub query_id: String,
    pub stage: Stage,
    pub order: Vec<String>,
    #[serde(default)]
    pub repairs: BTreeSet<Repair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Prompt and raw response of one agent call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub query_id: String,
    pub stage: Stage,
    pub prompt: String,
    pub response: Option<String>,
    pub repairs: BTreeSet<Repair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn stage_of(kind: AgentKind) -> Stage {
    match kind {
        AgentKind::Diversity => Stage::Diversity,
        AgentKind::Accuracy => Stage::DiversityAccuracy,
    }
}

/// Prompts `agent` with the candidates and maps its answer back to item ids.
pub fn rerank_stage(
    agent: &dyn Agent,
    query: &Item,
    candidates: &[&Item],
    kind: AgentKind,
) -> Result<StageOutcome, PipelineError> {
    rerank_stage_with_limit(agent, query, candidates, kind, DEFAULT_MAX_CANDIDATES)
}

fn rerank_stage_with_limit(
    agent: &dyn Agent,
    query: &Item,
    candidates: &[&Item],
    kind: AgentKind,
    max_candidates: usize,
) -> Result<StageOutcome, PipelineError> {
    let stage = stage_of(kind);
    let stage_err = |source| PipelineError::Stage {
        query: query.id.clone(),
        stage,
        source,
    };
    let prompt =
        build_prompt_with_limit(query, candidates, kind, max_candidates).map_err(stage_err)?;
    let raw = agent.complete(&prompt).map_err(stage_err)?;
    let parsed = parse_permutation(&raw, prompt.len());
    let order = parsed
        .order
        .iter()
        .map(|&k| prompt.index_to_id[k].clone())
        .collect();
    Ok(StageOutcome {
        list: RankedList {
            query_id: query.id.clone(),
            stage,
            order,
        },
        repairs: parsed.repairs,
        prompt: prompt.text,
        response: Some(raw),
        failure: None,
    })
}

/// The agents serving each reranking stage.
#[derive(Clone, Copy)]
pub struct StageAgents<'a> {
    pub diversity: &'a dyn Agent,
    pub accuracy: &'a dyn Agent,
}

/// Everything produced for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query: QueryInstance,
    pub retrieval: CandidateList,
    pub base: RankedList,
    pub diversity: StageOutcome,
    pub diversity_accuracy: StageOutcome,
}

impl QueryOutcome {
    pub fn list(&self, stage: Stage) -> &RankedList {
        match stage {
            Stage::Base => &self.base,
            Stage::Diversity => &self.diversity.list,
            Stage::DiversityAccuracy => &self.diversity_accuracy.list,
        }
    }

    /// Whether either agent stage fell back to identity order.
    pub fn failed(&self) -> bool {
        self.diversity.failure.is_some() || self.diversity_accuracy.failure.is_some()
    }

    pub fn stage_records(&self) -> [StageRecord; 3] {
        let rec =
            |list: &RankedList, repairs: BTreeSet<Repair>, failure: Option<String>| StageRecord {
                query_id: list.query_id.clone(),
                stage: list.stage,
                order: list.order.clone(),
                repairs,
                failure,
            };
        [
            rec(&self.base, BTreeSet::new(), None),
            rec(
                &self.diversity.list,
                self.diversity.repairs.clone(),
                self.diversity.failure.clone(),
            ),
            rec(
                &self.diversity_accuracy.list,
                self.diversity_accuracy.repairs.clone(),
                self.diversity_accuracy.failure.clone(),
            ),
        ]
    }

    pub fn audit_records(&self) -> [AuditRecord; 2] {
        [&self.diversity, &self.diversity_accuracy].map(|s| AuditRecord {
            query_id: s.list.query_id.clone(),
            stage: s.list.stage,
            prompt: s.prompt.clone(),
            response: s.response.clone(),
            repairs: s.repairs.clone(),
            failure: s.failure.clone(),
        })
    }
}

fn run_stage(
    agent: &dyn Agent,
    query: &Item,
    candidates: &[&Item],
    kind: AgentKind,
    config: &PipelineConfig,
) -> Result<StageOutcome, PipelineError> {
    match rerank_stage_with_limit(agent, query, candidates, kind, config.max_prompt_candidates) {
        Err(PipelineError::Stage { source, stage, .. })
            if config.on_failure == FailurePolicy::Identity
                && !matches!(
                    source,
                    AgentError::EmptyCandidates
                        | AgentError::TooManyCandidates { .. }
                        | AgentError::DuplicateCandidate(_)
                ) =>
        {
            tracing::warn!(query = %query.id, %stage, error = %source, "agent failed, keeping input order");
            Ok(StageOutcome {
                list: RankedList {
                    query_id: query.id.clone(),
                    stage,
                    order: candidates.iter().map(|c| c.id.clone()).collect(),
                },
                repairs: BTreeSet::from([Repair::FallbackIdentity]),
                prompt: build_prompt_with_limit(
                    query,
                    candidates,
                    kind,
                    config.max_prompt_candidates,
                )
                .map(|p| p.text)
                .unwrap_or_default(),
                response: None,
                failure: Some(source.to_string()),
            })
        }
        other => other,
    }
}

/// Runs all three stages for one query.
pub fn run_pipeline(
    query: &QueryInstance,
    catalog: &ComplementGraph,
    retriever: &dyn Retriever,
    agents: StageAgents<'_>,
    config: &PipelineConfig,
) -> Result<QueryOutcome, PipelineError> {
    config.validate()?;
    let qid = &query.query_id;
    let query_item = catalog
        .item(qid)
        .ok_or_else(|| PipelineError::UnknownItem {
            query: qid.clone(),
            id: qid.clone(),
        })?;

    let retrieval =
        retriever
            .retrieve(qid, config.n_div)
            .map_err(|source| PipelineError::Retrieve {
                query: qid.clone(),
                source,
            })?;
    if retrieval.is_empty() {
        return Err(PipelineError::EmptyPool { query: qid.clone() });
    }
    let lookup = |id: &str| {
        catalog.item(id).ok_or_else(|| PipelineError::UnknownItem {
            query: qid.clone(),
            id: id.to_string(),
        })
    };
    let base_items: Vec<&Item> = retrieval.ids().map(lookup).collect::<Result<_, _>>()?;
    let base = RankedList {
        query_id: qid.clone(),
        stage: Stage::Base,
        order: base_items.iter().map(|i| i.id.clone()).collect(),
    };

    let diversity = run_stage(
        agents.diversity,
        query_item,
        &base_items,
        AgentKind::Diversity,
        config,
    )?;
    let head: Vec<&Item> = diversity
        .list
        .order
        .iter()
        .take(config.n_acc)
        .map(|id| lookup(id))
        .collect::<Result<_, _>>()?;
    let diversity_accuracy = run_stage(
        agents.accuracy,
        query_item,
        &head,
        AgentKind::Accuracy,
        config,
    )?;

    let outcome = QueryOutcome {
        query: query.clone(),
        retrieval,
        base,
        diversity,
        diversity_accuracy,
    };
    for stage in Stage::ALL {
        outcome
            .list(stage)
            .check()
            .map_err(|reason| PipelineError::Invariant {
                query: qid.clone(),
                stage,
                reason,
            })?;
    }
    Ok(outcome)
}

/// Runs every query with at most `max_in_flight` in progress at once.
/// Results come back in input order.
pub fn run_queries(
    queries: &[QueryInstance],
    catalog: &ComplementGraph,
    retriever: &dyn Retriever,
    agents: StageAgents<'_>,
    config: &PipelineConfig,
    max_in_flight: usize,
) -> Result<Vec<Result<QueryOutcome, PipelineError>>, PipelineError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(pool.install(|| {
        use rayon::prelude::*;
        queries
            .par_iter()
            .map(|q| run_pipeline(q, catalog, retriever, agents, config))
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::MockAgent;
    use crate::retriever::HeuristicRetriever;

    fn items(ids: &[&str]) -> Vec<Item> {
        ids.iter()
            .map(|id| Item::new(*id, format!("Title {id}")))
            .collect()
    }

    #[test]
    fn presets() {
        let f1 = PipelineConfig::preset("fig1").unwrap();
        assert_eq!((f1.n_div, f1.n_acc), (50, 25));
        let f2 = PipelineConfig::preset("fig2").unwrap();
        assert_eq!((f2.n_div, f2.n_acc), (100, 50));
        assert_eq!(f1.cutoffs, vec![1, 3, 5, 10]);
        assert!(PipelineConfig::preset("fig3").is_none());
        f1.validate().unwrap();
        f2.validate().unwrap();
    }

    #[test]
    fn config_invariants() {
        let bad = [
            PipelineConfig {
                n_acc: 60,
                ..PipelineConfig::fig1()
            },
            PipelineConfig {
                cutoffs: vec![1, 30],
                ..PipelineConfig::fig1()
            },
            PipelineConfig {
                cutoffs: vec![],
                ..PipelineConfig::fig1()
            },
            PipelineConfig {
                n_div: 200,
                n_acc: 50,
                ..PipelineConfig::fig1()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn stage_examples() {
        let q = Item::new("q", "Query");
        let c = items(&["a", "b", "c"]);
        let refs: Vec<&Item> = c.iter().collect();
        let run = |agent: &dyn Agent| {
            rerank_stage(agent, &q, &refs, AgentKind::Diversity)
                .unwrap()
                .list
                .order
        };
        assert_eq!(run(&MockAgent::identity()), vec!["a", "b", "c"]);
        assert_eq!(run(&MockAgent::reverse()), vec!["c", "b", "a"]);
        let oracle = MockAgent::oracle([("q", BTreeSet::from(["b".to_string()]))]);
        assert_eq!(run(&oracle), vec!["b", "a", "c"]);
    }

    struct Failing;
    impl Agent for Failing {
        fn complete(&self, _: &crate::agents::PromptBundle) -> Result<String, AgentError> {
            Err(AgentError::Transport("connection refused".into()))
        }
    }

    fn small_catalog(n: usize) -> ComplementGraph {
        let ids: Vec<String> = (0..n).map(|i| format!("i{i:03}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        ComplementGraph::new(items(&refs), Vec::<(String, String)>::new()).unwrap()
    }

    fn query(id: &str, truth: &[&str]) -> QueryInstance {
        QueryInstance {
            query_id: id.into(),
            ground_truth: truth.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn failure_falls_back_or_aborts() {
        let g = small_catalog(40);
        let r = HeuristicRetriever::new(&g);
        let identity = MockAgent::identity();
        let agents = StageAgents {
            diversity: &Failing,
            accuracy: &identity,
        };
        let q = query("i000", &["i005"]);
        let out = run_pipeline(&q, &g, &r, agents, &PipelineConfig::fig1()).unwrap();
        assert!(out.failed());
        assert_eq!(out.diversity.list.order, out.base.order);
        assert!(out.diversity.repairs.contains(&Repair::FallbackIdentity));

        let abort = PipelineConfig {
            on_failure: FailurePolicy::Abort,
            ..PipelineConfig::fig1()
        };
        let err = run_pipeline(&q, &g, &r, agents, &abort).unwrap_err();
        assert!(err.to_string().contains("i000"));
        assert!(err.to_string().contains("diversity"));
    }

    #[test]
    fn small_pool_flows_through() {
        let g = small_catalog(12);
        let r = HeuristicRetriever::new(&g);
        let id = MockAgent::identity();
        let agents = StageAgents {
            diversity: &id,
            accuracy: &id,
        };
        let cfg = PipelineConfig {
            cutoffs: vec![1, 3],
            ..PipelineConfig::fig1()
        };
        let out = run_pipeline(&query("i000", &["i001"]), &g, &r, agents, &cfg).unwrap();
        assert_eq!(out.base.order.len(), 11);
        assert_eq!(out.diversity.list.order, out.base.order);
        assert_eq!(out.diversity_accuracy.list.order, out.base.order);
    }

    #[test]
    fn run_queries_preserves_order() {
        let g = small_catalog(60);
        let r = HeuristicRetriever::new(&g);
        let sh = MockAgent::shuffle(3);
        let agents = StageAgents {
            diversity: &sh,
            accuracy: &sh,
        };
        let qs: Vec<QueryInstance> = (0..20)
            .map(|i| query(&format!("i{i:03}"), &["i059"]))
            .collect();
        let cfg = PipelineConfig::fig1();
        let a = run_queries(&qs, &g, &r, agents, &cfg, 4).unwrap();
        let b = run_queries(&qs, &g, &r, agents, &cfg, 1).unwrap();
        let ids: Vec<&str> = a
            .iter()
            .map(|o| o.as_ref().unwrap().query.query_id.as_str())
            .collect();
        assert_eq!(
            ids,
            qs.iter().map(|q| q.query_id.as_str()).collect::<Vec<_>>()
        );
        let strip = |v: Vec<Result<QueryOutcome, PipelineError>>| {
            v.into_iter().map(Result::unwrap).collect::<Vec<_>>()
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn stage_parse_roundtrip() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.as_str())
            );
        }
    }
}
