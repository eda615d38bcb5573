//! Accuracy and diversity metrics for ranked recommendation lists, their
//! aggregation over queries, and percent lift between pipeline stages.
//!
//! Accuracy uses binary relevance against a held-out ground-truth set:
//! Hit@K and NDCG@K with a log2 discount and an ideal DCG over
//! `min(|gt|, K)` positions. Diversity pools the title tokens of the top-K
//! items: Entropy@K is the Shannon entropy (nats) of that token distribution
//! and Vocabulary@K its number of distinct tokens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::Stage;

/// Cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no per-query results for {method}/{stage} at K={k}")]
    EmptyQuerySet {
        method: String,
        stage: Stage,
        k: usize,
    },
    #[error("cannot compare rows from different datasets or cutoffs ({0})")]
    Mismatch(String),
    #[error("lift needs at least one value")]
    EmptyLifts,
}

pub fn hit_at_k<T: Ord>(order: &[T], ground_truth: &BTreeSet<T>, k: usize) -> f64 {
    if order.iter().take(k).any(|id| ground_truth.contains(id)) {
        1.0
    } else {
        0.0
    }
}

fn discount(position: usize) -> f64 {
    // 1-based position
    1.0 / ((position + 1) as f64).log2()
}

pub fn ndcg_at_k<T: Ord>(order: &[T], ground_truth: &BTreeSet<T>, k: usize) -> f64 {
    let ideal_hits = ground_truth.len().min(k);
    if ideal_hits == 0 {
        return 0.0;
    }
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| ground_truth.contains(id))
        .fold(0.0, |acc, (i, _)| acc + discount(i + 1));
    let idcg: f64 = (1..=ideal_hits).map(discount).fold(0.0, |a, d| a + d);
    dcg / idcg
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(title: &str) -> Vec<String> {
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn token_counts<I, S>(titles: I) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = BTreeMap::new();
    for title in titles {
        for tok in tokenize(title.as_ref()) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

/// Shannon entropy in nats of a token multiset; 0 for an empty one.
pub fn token_entropy<I, S>(tokens: I) -> f64
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref().to_string()).or_insert(0) += 1;
    }
    entropy_of_counts(counts.values().copied())
}

fn entropy_of_counts(counts: impl Iterator<Item = usize> + Clone) -> f64 {
    let total: usize = counts.clone().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts.filter(|&c| c > 0).fold(0.0, |acc, c| {
        let p = c as f64 / total;
        acc - p * p.ln()
    });
    // a single token gives -(1 * ln 1) = -0.0
    h.abs()
}

/// Entropy of the tokens pooled across `titles`.
pub fn entropy_at_k<I, S>(titles: I) -> f64
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    entropy_of_counts(
        token_counts(titles)
            .into_values()
            .collect::<Vec<_>>()
            .into_iter(),
    )
}

/// Distinct tokens across `titles`.
pub fn vocab_at_k<I, S>(titles: I) -> usize
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    token_counts(titles).len()
}

/// Metrics of one ranked list at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub k: usize,
    pub hit: f64,
    pub ndcg: f64,
    pub entropy: f64,
    pub vocab: usize,
}

/// Evaluates `order` at every cutoff. `title_of` resolves item ids to titles.
pub fn evaluate_list<'a, F>(
    query_id: &str,
    order: &[String],
    ground_truth: &BTreeSet<String>,
    cutoffs: &[usize],
    title_of: F,
) -> Vec<QueryMetrics>
where
    F: Fn(&str) -> &'a str,
{
    cutoffs
        .iter()
        .map(|&k| {
            let titles: Vec<&str> = order.iter().take(k).map(|id| title_of(id)).collect();
            QueryMetrics {
                query_id: query_id.to_string(),
                k,
                hit: hit_at_k(order, ground_truth, k),
                ndcg: ndcg_at_k(order, ground_truth, k),
                entropy: entropy_at_k(&titles),
                vocab: vocab_at_k(&titles),
            }
        })
        .collect()
}

/// Mean metrics of one (retriever, stage, dataset) at one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub dataset: String,
    pub stage: Stage,
    #[serde(rename = "K")]
    pub k: usize,
    pub hit: f64,
    pub ndcg: f64,
    pub entropy: f64,
    pub vocab: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Hit,
    Ndcg,
    Entropy,
    Vocab,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Hit, Metric::Ndcg, Metric::Entropy, Metric::Vocab];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Hit => "hit",
            Metric::Ndcg => "ndcg",
            Metric::Entropy => "entropy",
            Metric::Vocab => "vocab",
        }
    }
}

impl MetricsRow {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Hit => self.hit,
            Metric::Ndcg => self.ndcg,
            Metric::Entropy => self.entropy,
            Metric::Vocab => self.vocab,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Unweighted mean over queries, one row per cutoff. Input order is the
/// summation order.
pub fn aggregate(
    per_query: &[QueryMetrics],
    method: &str,
    stage: Stage,
    dataset: &str,
    cutoffs: &[usize],
) -> Result<Vec<MetricsRow>, MetricsError> {
    cutoffs
        .iter()
        .map(|&k| {
            let at_k: Vec<&QueryMetrics> = per_query.iter().filter(|q| q.k == k).collect();
            if at_k.is_empty() {
                return Err(MetricsError::EmptyQuerySet {
                    method: method.to_string(),
                    stage,
                    k,
                });
            }
            Ok(MetricsRow {
                method: method.to_string(),
                dataset: dataset.to_string(),
                stage,
                k,
                hit: mean(at_k.iter().map(|q| q.hit)),
                ndcg: mean(at_k.iter().map(|q| q.ndcg)),
                entropy: mean(at_k.iter().map(|q| q.entropy)),
                vocab: mean(at_k.iter().map(|q| q.vocab as f64)),
            })
        })
        .collect()
}

/// `100 * (enhanced - base) / base`, absent when `base` is zero.
pub fn lift_pct(enhanced: f64, base: f64) -> Option<f64> {
    (base != 0.0).then(|| 100.0 * (enhanced - base) / base)
}

/// Percent lift of every metric from `base` to `enhanced`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub hit: Option<f64>,
    pub ndcg: Option<f64>,
    pub entropy: Option<f64>,
    pub vocab: Option<f64>,
}

impl Lift {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Hit => self.hit,
            Metric::Ndcg => self.ndcg,
            Metric::Entropy => self.entropy,
            Metric::Vocab => self.vocab,
        }
    }
}

pub fn lift(enhanced: &MetricsRow, base: &MetricsRow) -> Result<Lift, MetricsError> {
    if enhanced.dataset != base.dataset || enhanced.k != base.k {
        return Err(MetricsError::Mismatch(format!(
            "{}@{} vs {}@{}",
            enhanced.dataset, enhanced.k, base.dataset, base.k
        )));
    }
    let l = |m| lift_pct(enhanced.get(m), base.get(m));
    Ok(Lift {
        hit: l(Metric::Hit),
        ndcg: l(Metric::Ndcg),
        entropy: l(Metric::Entropy),
        vocab: l(Metric::Vocab),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftStat {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; 0 when `n == 1`.
    pub std_err: f64,
    pub n: usize,
}

impl LiftStat {
    /// A single value has no spread to estimate.
    pub fn is_degenerate(&self) -> bool {
        self.n < 2
    }
}

pub fn lift_with_stderr(lifts: &[f64]) -> Result<LiftStat, MetricsError> {
    let n = lifts.len();
    if n == 0 {
        return Err(MetricsError::EmptyLifts);
    }
    let m = lifts.iter().fold(0.0, |a, x| a + x) / n as f64;
    let std_err = if n < 2 {
        0.0
    } else {
        let var = lifts.iter().fold(0.0, |a, x| a + (x - m).powi(2)) / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(LiftStat {
        mean: m,
        std_err,
        n,
    })
}

/// The three stage comparisons reported per dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Diversity + accuracy against the retriever.
    OverallVsBase,
    /// Diversity agent alone against the retriever.
    DiversityVsBase,
    /// Diversity + accuracy against diversity alone.
    FinalVsDiversity,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::OverallVsBase,
        Comparison::DiversityVsBase,
        Comparison::FinalVsDiversity,
    ];

    /// `(enhanced, base)` stages.
    pub fn stages(self) -> (Stage, Stage) {
        match self {
            Comparison::OverallVsBase => (Stage::DiversityAccuracy, Stage::Base),
            Comparison::DiversityVsBase => (Stage::Diversity, Stage::Base),
            Comparison::FinalVsDiversity => (Stage::DiversityAccuracy, Stage::Diversity),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::OverallVsBase => "overall_vs_base",
            Comparison::DiversityVsBase => "diversity_vs_base",
            Comparison::FinalVsDiversity => "final_vs_diversity",
        }
    }
}

/// Cross-retriever lift for one (dataset, K, comparison, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub metric: Metric,
    pub dataset: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub comparison: Comparison,
    /// Absent when every retriever's base value was zero.
    pub mean_lift_pct: Option<f64>,
    /// Absent with fewer than two defined lifts.
    pub std_err: Option<f64>,
    /// Retrievers contributing a defined lift.
    pub retrievers: usize,
}

/// Lift rows for every dataset, cutoff, comparison and metric present in
/// `rows`. Retrievers are the distinct `method` values.
pub fn lift_table(rows: &[MetricsRow]) -> Vec<LiftRow> {
    let mut index: BTreeMap<(&str, usize, &str, Stage), &MetricsRow> = BTreeMap::new();
    let mut groups: BTreeSet<(&str, usize)> = BTreeSet::new();
    let mut methods: BTreeSet<&str> = BTreeSet::new();
    for r in rows {
        index.insert((r.dataset.as_str(), r.k, r.method.as_str(), r.stage), r);
        groups.insert((r.dataset.as_str(), r.k));
        methods.insert(r.method.as_str());
    }

    let mut out = Vec::new();
    for &(dataset, k) in &groups {
        for comparison in Comparison::ALL {
            let (hi, lo) = comparison.stages();
            let lifts: Vec<Lift> = methods
                .iter()
                .filter_map(|m| {
                    let e = index.get(&(dataset, k, m, hi))?;
                    let b = index.get(&(dataset, k, m, lo))?;
                    lift(e, b).ok()
                })
                .collect();
            for metric in Metric::ALL {
                let defined: Vec<f64> = lifts.iter().filter_map(|l| l.get(metric)).collect();
                let stat = lift_with_stderr(&defined).ok();
                out.push(LiftRow {
                    metric,
                    dataset: dataset.to_string(),
                    k,
                    comparison,
                    mean_lift_pct: stat.map(|s| s.mean),
                    std_err: stat.filter(|s| !s.is_degenerate()).map(|s| s.std_err),
                    retrievers: defined.len(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn gt(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn hit_examples() {
        let order = ids(&["a", "b", "c"]);
        assert_eq!(hit_at_k(&order, &gt(&["b"]), 1), 0.0);
        assert_eq!(hit_at_k(&order, &gt(&["b"]), 3), 1.0);
        for k in 1..5 {
            assert_eq!(hit_at_k(&order, &gt(&["a"]), k), 1.0);
        }
        assert_eq!(hit_at_k(&order, &gt(&["z"]), 10), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&ids(&["b", "a", "c"]), &gt(&["b"]), 1), 1.0);
        assert!((ndcg_at_k(&ids(&["a", "b", "c"]), &gt(&["c"]), 3) - 0.5).abs() < 1e-15);
        let expected = (1.0 / 3f64.log2() + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        let got = ndcg_at_k(&ids(&["a", "b", "c"]), &gt(&["b", "c"]), 3);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.6934).abs() < 1e-4);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("iPhone 13 Case"), vec!["iphone", "13", "case"]);
        assert_eq!(
            tokenize("USB-C Cable (2m)"),
            vec!["usb", "c", "cable", "2m"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn entropy_examples() {
        assert!((token_entropy(["a", "a", "b", "b"]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(token_entropy(["x", "x", "x"]), 0.0);
        assert!((token_entropy(["a", "b", "c", "d"]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_at_k(Vec::<&str>::new()), 0.0);
        assert!((entropy_at_k(["A a", "b-B"]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn vocab_examples() {
        assert_eq!(vocab_at_k(["a a b"]), 2);
        assert_eq!(vocab_at_k(["", ""]), 0);
        assert_eq!(vocab_at_k(["a b c", "d e f"]), 6);
    }

    fn qm(hit: f64, vocab: usize) -> QueryMetrics {
        QueryMetrics {
            query_id: "q".into(),
            k: 1,
            hit,
            ndcg: hit,
            entropy: 1.0,
            vocab,
        }
    }

    #[test]
    fn aggregate_means() {
        let rows = aggregate(&[qm(0.0, 19), qm(1.0, 20)], "m", Stage::Base, "d", &[1]).unwrap();
        assert_eq!(rows[0].hit, 0.5);
        assert_eq!(rows[0].vocab, 19.5);
        let single = aggregate(&[qm(1.0, 7)], "m", Stage::Base, "d", &[1]).unwrap();
        let dup = aggregate(&[qm(1.0, 7), qm(1.0, 7)], "m", Stage::Base, "d", &[1]).unwrap();
        assert_eq!(single, dup);
        assert!(matches!(
            aggregate(&[], "m", Stage::Base, "d", &[1]),
            Err(MetricsError::EmptyQuerySet { .. })
        ));
    }

    fn row(hit: f64, entropy: f64) -> MetricsRow {
        MetricsRow {
            method: "m".into(),
            dataset: "d".into(),
            stage: Stage::Base,
            k: 1,
            hit,
            ndcg: hit,
            entropy,
            vocab: 10.0,
        }
    }

    #[test]
    fn lift_examples() {
        let l = lift(&row(0.351, 2.93), &row(0.154, 2.86)).unwrap();
        assert!((l.hit.unwrap() - 127.922).abs() < 1e-3);
        assert!((l.entropy.unwrap() - 2.4476).abs() < 1e-3);
        let same = lift(&row(0.3, 2.0), &row(0.3, 2.0)).unwrap();
        for m in Metric::ALL {
            assert_eq!(same.get(m), Some(0.0));
        }
        let zero = lift(&row(0.3, 2.0), &row(0.0, 2.0)).unwrap();
        assert_eq!(zero.hit, None);
        let mut other = row(0.3, 2.0);
        other.k = 3;
        assert!(lift(&other, &row(0.3, 2.0)).is_err());
    }

    #[test]
    fn stderr_examples() {
        let s = lift_with_stderr(&[10.0, 10.0, 10.0]).unwrap();
        assert_eq!((s.mean, s.std_err), (10.0, 0.0));
        let s = lift_with_stderr(&[0.0, 20.0]).unwrap();
        assert!((s.mean - 10.0).abs() < 1e-12 && (s.std_err - 10.0).abs() < 1e-12);
        let s = lift_with_stderr(&[7.0]).unwrap();
        assert_eq!((s.mean, s.std_err), (7.0, 0.0));
        assert!(s.is_degenerate());
        assert_eq!(lift_with_stderr(&[]), Err(MetricsError::EmptyLifts));
    }

    proptest! {
        #[test]
        fn hit_nondecreasing_in_k(order in proptest::collection::vec(0u8..30, 0..20), truth in proptest::collection::btree_set(0u8..30, 1..5)) {
            let mut prev = 0.0;
            for k in 1..=25 {
                let h = hit_at_k(&order, &truth, k);
                prop_assert!(h >= prev);
                prev = h;
            }
        }

        #[test]
        fn ndcg_at_one_equals_hit(order in proptest::collection::vec(0u8..30, 0..20), truth in proptest::collection::btree_set(0u8..30, 1..5)) {
            prop_assert_eq!(ndcg_at_k(&order, &truth, 1).to_bits(), hit_at_k(&order, &truth, 1).to_bits());
        }

        #[test]
        fn ndcg_in_unit_interval(order in proptest::collection::vec(0u8..30, 0..20), truth in proptest::collection::btree_set(0u8..30, 1..5), k in 1usize..25) {
            let mut dedup = Vec::new();
            for x in order { if !dedup.contains(&x) { dedup.push(x); } }
            let v = ndcg_at_k(&dedup, &truth, k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }

        #[test]
        fn diversity_is_order_invariant(titles in proptest::collection::vec("[a-e ]{0,12}", 1..8), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = titles.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(vocab_at_k(&titles), vocab_at_k(&shuffled));
            prop_assert_eq!(entropy_at_k(&titles).to_bits(), entropy_at_k(&shuffled).to_bits());
        }

        #[test]
        fn lift_is_scale_invariant(base in 0.01f64..100.0, enhanced in 0.0f64..100.0, c in 0.01f64..1000.0) {
            let a = lift_pct(enhanced, base).unwrap();
            let b = lift_pct(enhanced * c, base * c).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
