//! Baseline candidate retrieval.
//!
//! The reranking stages only need a scored, ordered candidate list per query.
//! [`HeuristicRetriever`] computes one from item metadata; [`PrecomputedRetriever`]
//! reads lists exported by any external model.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ComplementGraph, Item};

/// Default retrieval depth.
pub const DEFAULT_DEPTH: usize = 50;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("unknown query item {0:?}")]
    UnknownQuery(String),
    #[error("query {0:?} not present in precomputed scores")]
    MissingQuery(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed score record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub score: f64,
}

/// Retriever output for one query: unique candidates, score descending,
/// ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
    pub source: String,
}

impl CandidateList {
    /// Sorts, drops the query itself and keeps the best-scored copy of any
    /// repeated candidate.
    pub fn normalized(
        query_id: impl Into<String>,
        mut candidates: Vec<Candidate>,
        source: impl Into<String>,
    ) -> Self {
        let query_id = query_id.into();
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        let mut seen = HashSet::new();
        candidates.retain(|c| c.id != query_id && seen.insert(c.id.clone()));
        CandidateList {
            query_id,
            candidates,
            source: source.into(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.candidates.truncate(n);
    }
}

/// Anything that can serve a top-`n` candidate list for a query.
pub trait Retriever: Send + Sync {
    fn name(&self) -> &str;
    fn retrieve(&self, query_id: &str, n: usize) -> Result<CandidateList, RetrieveError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreWeights {
    pub category: f64,
    pub price: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            category: 1.0,
            price: 0.5,
        }
    }
}

/// Longest common category prefix over the longer path length; 0 when both
/// paths are empty.
pub fn category_overlap(a: &[String], b: &[String]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let common = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    common as f64 / longest as f64
}

/// `1 / (1 + |ln(p_q / p_c)|)`, or 0 unless both prices are positive.
pub fn price_proximity(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(p), Some(q)) if p > 0.0 && q > 0.0 => 1.0 / (1.0 + (p / q).ln().abs()),
        _ => 0.0,
    }
}

/// Heuristic complementarity score.
pub fn score_pair(query: &Item, candidate: &Item, weights: &ScoreWeights) -> f64 {
    weights.category * category_overlap(&query.categories, &candidate.categories)
        + weights.price * price_proximity(query.price, candidate.price)
}

/// Scores every catalog item against the query with [`score_pair`].
#[derive(Debug, Clone)]
pub struct HeuristicRetriever<'g> {
    graph: &'g ComplementGraph,
    weights: ScoreWeights,
    exclude_neighbors: bool,
    name: String,
}

impl<'g> HeuristicRetriever<'g> {
    /// Items already linked to the query in `graph` are excluded by default.
    pub fn new(graph: &'g ComplementGraph) -> Self {
        HeuristicRetriever {
            graph,
            weights: ScoreWeights::default(),
            exclude_neighbors: true,
            name: "heuristic".to_string(),
        }
    }

    pub fn with_weights(mut self, weights: ScoreWeights) -> Self {
        self.weights = weights;
        self
    }

    pub fn exclude_neighbors(mut self, exclude: bool) -> Self {
        self.exclude_neighbors = exclude;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl Retriever for HeuristicRetriever<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn retrieve(&self, query_id: &str, n: usize) -> Result<CandidateList, RetrieveError> {
        retrieve_heuristic(self, query_id, n)
    }
}

pub fn retrieve_heuristic(
    retriever: &HeuristicRetriever<'_>,
    query_id: &str,
    n: usize,
) -> Result<CandidateList, RetrieveError> {
    let graph = retriever.graph;
    let query = graph
        .item(query_id)
        .ok_or_else(|| RetrieveError::UnknownQuery(query_id.to_string()))?;
    let linked: HashSet<&str> = if retriever.exclude_neighbors {
        graph.neighbors(query_id).collect()
    } else {
        HashSet::new()
    };
    let candidates = graph
        .items()
        .filter(|c| c.id != query_id && !linked.contains(c.id.as_str()))
        .map(|c| Candidate {
            id: c.id.clone(),
            score: score_pair(query, c, &retriever.weights),
        })
        .collect();
    let mut list = CandidateList::normalized(query_id, candidates, retriever.name.clone());
    list.truncate(n);
    Ok(list)
}

#[derive(Deserialize)]
struct ScoreRecord {
    query_id: String,
    candidates: Vec<(String, f64)>,
}

/// Candidate lists loaded from a line-delimited JSON scores file:
/// `{"query_id": "...", "candidates": [["id", 0.93], ...]}`.
#[derive(Debug, Clone)]
pub struct PrecomputedRetriever {
    lists: HashMap<String, CandidateList>,
    name: String,
}

impl PrecomputedRetriever {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrieveError> {
        let path = path.as_ref();
        let io_err = |source| RetrieveError::Io {
            path: path.to_path_buf(),
            source,
        };
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "precomputed".to_string());
        let mut lists = HashMap::new();
        let reader = BufReader::new(File::open(path).map_err(io_err)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| RetrieveError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let record: ScoreRecord =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if lists.contains_key(&record.query_id) {
                return Err(malformed(format!("query {:?} repeated", record.query_id)));
            }
            let candidates = record
                .candidates
                .into_iter()
                .map(|(id, score)| Candidate { id, score })
                .collect();
            lists.insert(
                record.query_id.clone(),
                CandidateList::normalized(record.query_id, candidates, name.clone()),
            );
        }
        Ok(PrecomputedRetriever { lists, name })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        for list in self.lists.values_mut() {
            list.source = self.name.clone();
        }
        self
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }
}

impl Retriever for PrecomputedRetriever {
    fn name(&self) -> &str {
        &self.name
    }

    fn retrieve(&self, query_id: &str, n: usize) -> Result<CandidateList, RetrieveError> {
        let mut list = self
            .lists
            .get(query_id)
            .cloned()
            .ok_or_else(|| RetrieveError::MissingQuery(query_id.to_string()))?;
        list.truncate(n);
        Ok(list)
    }
}

/// One-shot lookup against a scores file.
pub fn retrieve_precomputed(
    scores_path: impl AsRef<Path>,
    query_id: &str,
    n: usize,
) -> Result<CandidateList, RetrieveError> {
    PrecomputedRetriever::load(scores_path)?.retrieve(query_id, n)
}
