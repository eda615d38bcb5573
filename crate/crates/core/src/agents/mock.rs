//! Deterministic stand-ins for an LLM endpoint.

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentError, PromptBundle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockPolicy {
    Identity,
    Reverse,
    SeededShuffle(u64),
    /// Ground-truth candidates first; keyed by query id.
    Oracle(HashMap<String, BTreeSet<String>>),
}

impl FromStr for MockPolicy {
    type Err = AgentError;

    /// Parses `identity`, `reverse` or `shuffle:<seed>`. `oracle` needs
    /// ground truth and is built with [`MockAgent::oracle`] instead.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(MockPolicy::Identity),
            "reverse" => Ok(MockPolicy::Reverse),
            "oracle" => Ok(MockPolicy::Oracle(HashMap::new())),
            other => other
                .strip_prefix("shuffle:")
                .and_then(|seed| seed.parse().ok())
                .map(MockPolicy::SeededShuffle)
                .ok_or_else(|| AgentError::Config(format!("unknown mock policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockAgent {
    policy: MockPolicy,
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn format_order(order: &[usize]) -> String {
    let body = order
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{body}]")
}

impl MockAgent {
    pub fn new(policy: MockPolicy) -> Self {
        MockAgent { policy }
    }

    pub fn identity() -> Self {
        Self::new(MockPolicy::Identity)
    }

    pub fn reverse() -> Self {
        Self::new(MockPolicy::Reverse)
    }

    pub fn shuffle(seed: u64) -> Self {
        Self::new(MockPolicy::SeededShuffle(seed))
    }

    /// Oracle over per-query ground truth.
    pub fn oracle<I, S>(truth: I) -> Self
    where
        I: IntoIterator<Item = (S, BTreeSet<String>)>,
        S: Into<String>,
    {
        Self::new(MockPolicy::Oracle(
            truth.into_iter().map(|(q, gt)| (q.into(), gt)).collect(),
        ))
    }

    pub fn policy(&self) -> &MockPolicy {
        &self.policy
    }

    /// The order this agent answers with for `prompt`.
    pub fn order_for(&self, prompt: &PromptBundle) -> Vec<usize> {
        let n = prompt.len();
        match &self.policy {
            MockPolicy::Identity => (0..n).collect(),
            MockPolicy::Reverse => (0..n).rev().collect(),
            MockPolicy::SeededShuffle(seed) => {
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&prompt.query_id));
                order.shuffle(&mut rng);
                order
            }
            MockPolicy::Oracle(truth) => {
                let empty = BTreeSet::new();
                let gt = truth.get(&prompt.query_id).unwrap_or(&empty);
                let (mut hits, misses): (Vec<usize>, Vec<usize>) =
                    (0..n).partition(|&k| gt.contains(&prompt.index_to_id[k]));
                hits.extend(misses);
                hits
            }
        }
    }
}

impl Agent for MockAgent {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, AgentError> {
        Ok(format_order(&self.order_for(prompt)))
    }
}
