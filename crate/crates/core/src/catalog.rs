//! Product-graph data model, line-delimited JSON ingestion and holdout splits.
//!
//! A catalog is a set of [`Item`]s joined by undirected complementary edges.
//! Edges are stored with their endpoints in ascending id order so that
//! `(a, b)` and `(b, a)` collapse to one entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate item id {0:?}")]
    DuplicateItem(String),
    #[error("invalid item {id:?}: {reason}")]
    InvalidItem { id: String, reason: &'static str },
    #[error("edge references unknown item {0:?}")]
    UnknownItem(String),
    #[error("self-loop on item {0:?}")]
    SelfLoop(String),
    #[error("holdout fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("holdout of {fraction} over {edges} edges selects no edges")]
    EmptyHoldout { fraction: f64, edges: usize },
}

impl CatalogError {
    /// Attaches a file path and 1-based line number to a validation error.
    fn at(self, path: &Path, line: usize) -> Self {
        match self {
            CatalogError::Io { .. } | CatalogError::Malformed { .. } => self,
            other => CatalogError::Malformed {
                path: path.to_path_buf(),
                line,
                message: other.to_string(),
            },
        }
    }
}

/// A product node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub title: String,
    /// Category path, coarse to fine.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
}

impl Item {
    pub fn new(id: impl Into<String>, title: impl Into<String>) -> Self {
        Item {
            id: id.into(),
            title: title.into(),
            categories: Vec::new(),
            price: None,
        }
    }

    pub fn with_categories<I, S>(mut self, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.categories = categories.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_price(mut self, price: f64) -> Self {
        self.price = Some(price);
        self
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |reason| CatalogError::InvalidItem {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.title.is_empty() {
            return Err(invalid("empty title"));
        }
        if self.categories.iter().any(String::is_empty) {
            return Err(invalid("empty category level"));
        }
        if let Some(p) = self.price {
            if !(p.is_finite() && p >= 0.0) {
                return Err(invalid("price must be a nonnegative number"));
            }
        }
        Ok(())
    }
}

/// An undirected edge with endpoints in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(String, String);

impl Edge {
    /// Builds a normalized edge. Returns `None` for a self-loop.
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Option<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Edge(a, b)),
            std::cmp::Ordering::Greater => Some(Edge(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn low(&self) -> &str {
        &self.0
    }

    pub fn high(&self) -> &str {
        &self.1
    }
}

/// Items plus undirected complementary edges. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementGraph {
    items: BTreeMap<String, Item>,
    edges: BTreeSet<Edge>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl ComplementGraph {
    /// Validates items and edges. Duplicate and reversed edges collapse.
    pub fn new<E, S>(items: Vec<Item>, edges: E) -> Result<Self, CatalogError>
    where
        E: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for item in items {
            item.validate()?;
            if map.contains_key(&item.id) {
                return Err(CatalogError::DuplicateItem(item.id));
            }
            map.insert(item.id.clone(), item);
        }
        let mut graph = ComplementGraph {
            items: map,
            edges: BTreeSet::new(),
            adjacency: BTreeMap::new(),
        };
        for (a, b) in edges {
            graph.insert_edge(a.into(), b.into())?;
        }
        Ok(graph)
    }

    fn insert_edge(&mut self, a: String, b: String) -> Result<(), CatalogError> {
        for id in [&a, &b] {
            if !self.items.contains_key(id) {
                return Err(CatalogError::UnknownItem(id.clone()));
            }
        }
        let edge = Edge::new(a.clone(), b).ok_or(CatalogError::SelfLoop(a))?;
        self.adjacency
            .entry(edge.0.clone())
            .or_default()
            .insert(edge.1.clone());
        self.adjacency
            .entry(edge.1.clone())
            .or_default()
            .insert(edge.0.clone());
        self.edges.insert(edge);
        Ok(())
    }

    /// Same items, different edge set.
    fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut graph = ComplementGraph {
            items: self.items.clone(),
            edges: BTreeSet::new(),
            adjacency: BTreeMap::new(),
        };
        for e in edges {
            graph
                .insert_edge(e.0, e.1)
                .expect("edge drawn from a validated graph");
        }
        graph
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.items.contains_key(id)
    }

    /// Items in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        Edge::new(a, b).is_some_and(|e| self.edges.contains(&e))
    }

    /// Neighbors of `id` in ascending id order; empty for isolated or unknown ids.
    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &str> {
        self.adjacency
            .get(id)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }
}

/// An evaluation query: one item and its held-out true complements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub query_id: String,
    pub ground_truth: BTreeSet<String>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CatalogError> {
    let io_err = |source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if !line.trim().is_empty() {
            out.push((idx + 1, line));
        }
    }
    Ok(out)
}

/// Loads an items file (one JSON object per line) and an edges file
/// (one `[id_a, id_b]` array per line).
pub fn load_catalog(
    items_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<ComplementGraph, CatalogError> {
    let items_path = items_path.as_ref();
    let edges_path = edges_path.as_ref();

    let mut graph = ComplementGraph::new(Vec::new(), Vec::<(String, String)>::new())?;
    for (line_no, line) in read_lines(items_path)? {
        let item: Item = serde_json::from_str(&line).map_err(|e| CatalogError::Malformed {
            path: items_path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        item.validate().map_err(|e| e.at(items_path, line_no))?;
        if graph.items.contains_key(&item.id) {
            return Err(CatalogError::DuplicateItem(item.id).at(items_path, line_no));
        }
        graph.items.insert(item.id.clone(), item);
    }

    for (line_no, line) in read_lines(edges_path)? {
        let (a, b): (String, String) =
            serde_json::from_str(&line).map_err(|e| CatalogError::Malformed {
                path: edges_path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        graph
            .insert_edge(a, b)
            .map_err(|e| e.at(edges_path, line_no))?;
    }
    Ok(graph)
}

/// Writes `graph` in the format read by [`load_catalog`].
pub fn write_catalog(
    graph: &ComplementGraph,
    items_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(items_path)?);
    for item in graph.items() {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(edges_path)?);
    for edge in graph.edges() {
        serde_json::to_writer(&mut w, &[edge.low(), edge.high()])?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Seeded random edge holdout.
///
/// `round(holdout_fraction * |E|)` edges are removed from the returned train
/// graph. A held-out edge contributes its higher endpoint to the ground truth
/// of its lower endpoint; queries come back sorted by query id.
pub fn split_holdout(
    graph: &ComplementGraph,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(ComplementGraph, Vec<QueryInstance>), CatalogError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(CatalogError::BadFraction(holdout_fraction));
    }
    let total = graph.edge_count();
    let held = (holdout_fraction * total as f64).round() as usize;
    if held == 0 {
        return Err(CatalogError::EmptyHoldout {
            fraction: holdout_fraction,
            edges: total,
        });
    }

    let mut edges: Vec<Edge> = graph.edges.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let train_edges = edges.split_off(held);

    let mut grouped: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for Edge(q, c) in edges {
        grouped.entry(q).or_default().insert(c);
    }
    let queries = grouped
        .into_iter()
        .map(|(query_id, ground_truth)| QueryInstance {
            query_id,
            ground_truth,
        })
        .collect();
    Ok((graph.with_edges(train_edges), queries))
}
