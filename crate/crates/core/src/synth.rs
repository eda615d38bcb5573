//! Synthetic catalogs with planted complementary edges.
//!
//! Every item belongs to one genre, stored as its only category level. Titles
//! are drawn from a genre-specific token pool, and prices cluster around a
//! per-genre base price. Each planted edge joins a source item to one of the
//! price-nearest items of either its own genre or, with probability
//! `cross_genre_edge_ratio`, a different genre.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{write_catalog, ComplementGraph, Edge, Item};

/// How many price-nearest items a planted edge may pick its target from.
const TARGET_NEIGHBORHOOD: usize = 8;
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ru", "ten", "vo", "sa", "pex", "dri", "no", "bel", "zu", "fa", "gor", "hi",
    "ju", "wex", "ta", "ori", "qua", "ne", "lyx", "po", "sen",
];

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_items: usize,
    pub n_genres: usize,
    /// Mean item degree in the generated graph.
    pub edges_per_item: f64,
    pub title_tokens_min: usize,
    pub title_tokens_max: usize,
    pub token_pool_per_genre: usize,
    pub cross_genre_edge_ratio: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 500,
            n_genres: 5,
            edges_per_item: 4.0,
            title_tokens_min: 3,
            title_tokens_max: 6,
            token_pool_per_genre: 40,
            cross_genre_edge_ratio: 0.3,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.n_items == 0 {
            return bad("n_items must be positive".into());
        }
        if self.n_genres == 0 {
            return bad("n_genres must be positive".into());
        }
        if self.n_genres > self.n_items {
            return bad(format!(
                "n_genres ({}) exceeds n_items ({})",
                self.n_genres, self.n_items
            ));
        }
        if !(self.edges_per_item.is_finite() && self.edges_per_item >= 0.0) {
            return bad("edges_per_item must be a nonnegative number".into());
        }
        if self.title_tokens_min == 0 || self.title_tokens_min > self.title_tokens_max {
            return bad(format!(
                "title token bounds must satisfy 1 <= min <= max, got {}..{}",
                self.title_tokens_min, self.title_tokens_max
            ));
        }
        if self.token_pool_per_genre == 0 {
            return bad("token_pool_per_genre must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.cross_genre_edge_ratio) {
            return bad("cross_genre_edge_ratio must lie in [0, 1]".into());
        }
        if self.n_genres == 1 && self.cross_genre_edge_ratio > 0.0 {
            return bad("cross-genre edges need at least two genres".into());
        }
        Ok(())
    }

    fn target_edges(&self) -> usize {
        (self.n_items as f64 * self.edges_per_item / 2.0).round() as usize
    }
}

/// A generated catalog and the genre label of every item.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub graph: ComplementGraph,
    pub genre_of: BTreeMap<String, String>,
}

pub fn genre_label(index: usize) -> String {
    format!("genre-{index:02}")
}

fn item_id(index: usize, n_items: usize) -> String {
    let width = n_items.saturating_sub(1).to_string().len().max(4);
    format!("p{index:0width$}")
}

fn token_pools(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let mut seen = HashSet::new();
    let mut pools = Vec::with_capacity(config.n_genres);
    for _ in 0..config.n_genres {
        let mut pool = Vec::with_capacity(config.token_pool_per_genre);
        while pool.len() < config.token_pool_per_genre {
            let syllables = rng.random_range(2..=3);
            let mut word: String = (0..syllables)
                .map(|_| *SYLLABLES.choose(rng).expect("nonempty syllables"))
                .collect();
            // Large pools exhaust the syllable space; a numeric suffix keeps tokens unique.
            if seen.contains(&word) {
                word.push_str(&seen.len().to_string());
            }
            if seen.insert(word.clone()) {
                pool.push(word);
            }
        }
        pools.push(pool);
    }
    pools
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Generates a catalog. Deterministic for a fixed config.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pools = token_pools(config, &mut rng);
    let base_price: Vec<f64> = (0..config.n_genres)
        .map(|_| rng.random_range(10.0..300.0))
        .collect();

    let mut items = Vec::with_capacity(config.n_items);
    let mut genre_idx = Vec::with_capacity(config.n_items);
    for i in 0..config.n_items {
        let g = i % config.n_genres;
        let n_tokens = rng.random_range(config.title_tokens_min..=config.title_tokens_max);
        let title = (0..n_tokens)
            .map(|_| capitalize(pools[g].choose(&mut rng).expect("nonempty pool")))
            .collect::<Vec<_>>()
            .join(" ");
        let price = (base_price[g] * rng.random_range(0.6..1.6) * 100.0).round() / 100.0;
        items.push(
            Item::new(item_id(i, config.n_items), title)
                .with_categories([genre_label(g)])
                .with_price(price),
        );
        genre_idx.push(g);
    }

    // Members of each genre, sorted by price, for nearest-price target selection.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.n_genres];
    for (i, &g) in genre_idx.iter().enumerate() {
        members[g].push(i);
    }
    let price_of = |i: usize| items[i].price.unwrap_or(0.0);
    for m in &mut members {
        m.sort_by(|&a, &b| price_of(a).total_cmp(&price_of(b)).then(a.cmp(&b)));
    }

    let target = config.target_edges();
    let max_attempts = target.saturating_mul(50).max(100);
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    let mut attempts = 0;
    while edges.len() < target && attempts < max_attempts {
        attempts += 1;
        let src = rng.random_range(0..config.n_items);
        let src_genre = genre_idx[src];
        let cross = rng.random_bool(config.cross_genre_edge_ratio);
        let dst_genre = if cross {
            let off = rng.random_range(1..config.n_genres);
            (src_genre + off) % config.n_genres
        } else {
            src_genre
        };
        let pool: Vec<usize> = {
            let mut by_distance: Vec<usize> = members[dst_genre]
                .iter()
                .copied()
                .filter(|&j| j != src)
                .collect();
            let p = price_of(src).max(0.01).ln();
            by_distance.sort_by(|&a, &b| {
                let da = (price_of(a).max(0.01).ln() - p).abs();
                let db = (price_of(b).max(0.01).ln() - p).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            by_distance.truncate(TARGET_NEIGHBORHOOD);
            by_distance
        };
        let Some(&dst) = pool.choose(&mut rng) else {
            continue;
        };
        if let Some(edge) = Edge::new(items[src].id.clone(), items[dst].id.clone()) {
            edges.insert(edge);
        }
    }
    if edges.len() < target {
        tracing::warn!(
            planted = edges.len(),
            target,
            "synthetic graph saturated before reaching the target edge count"
        );
    }

    let genre_of = items
        .iter()
        .zip(&genre_idx)
        .map(|(item, &g)| (item.id.clone(), genre_label(g)))
        .collect();
    let graph = ComplementGraph::new(
        items,
        edges
            .into_iter()
            .map(|e| (e.low().to_string(), e.high().to_string())),
    )
    .expect("generated items and edges are valid");
    Ok(SynthDataset { graph, genre_of })
}

/// Writes `items.jsonl`, `edges.jsonl` and `genres.json` into `dir`.
pub fn write_dataset(dataset: &SynthDataset, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_catalog(
        &dataset.graph,
        dir.join("items.jsonl"),
        dir.join("edges.jsonl"),
    )?;
    let mut w = BufWriter::new(File::create(dir.join("genres.json"))?);
    serde_json::to_writer_pretty(&mut w, &dataset.genre_of)?;
    w.write_all(b"\n")?;
    w.flush()
}
