use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::catalog::Item;

/// Largest candidate list a prompt will carry unless overridden.
pub const DEFAULT_MAX_CANDIDATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Diversity,
    Accuracy,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Diversity => "diversity",
            AgentKind::Accuracy => "accuracy",
        }
    }

    /// The one sentence that distinguishes the two agents.
    pub fn ranking_focus(self) -> &'static str {
        match self {
            AgentKind::Diversity => {
                "Meanwhile, focus on the diversity aspect (more items with different 'genre' feature at the top of the list)."
            }
            AgentKind::Accuracy => {
                "Meanwhile, focus on the accuracy aspect (choose items that are most precisely and correctly complementary to the given product)."
            }
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A rendered prompt and the mapping from the local `ID:k` labels back to
/// catalog ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub query_id: String,
    pub text: String,
    pub index_to_id: Vec<String>,
    pub kind: AgentKind,
}

impl PromptBundle {
    pub fn len(&self) -> usize {
        self.index_to_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_id.is_empty()
    }
}

const TASK_DEFINITION: &str = "\
The task is identifying the complementary relation between the given product and candidates.
Complementary is defined as: products are likely to be purchased or used at the same time, but it is not a direct substitute.";

const FEW_SHOT: &str = "\
A complementary product can be:
- An accessory of the given product (e.g., iPhone Case is complementary to iPhone)
- Both accessories to the same product (e.g., Speaker Cables can be complementary to Speaker Stands)
- Products used together for the same activity (e.g., Bowl can be complementary to Plate)";

const RANKING_INSTRUCTION: &str = "\
Then rerank the candidates based on above given information. The order of reranking result should represent how likely the candidate is a complementary product.";

const OUTPUT_FORMAT: &str = "\
Your answer should ONLY rank all mentioned candidates ID, do NOT repeat or include Name. And omit anything else such as your thinking and decision-making process.
Example answer format for 5 candidates: [1, 4, 3, 0, 2]";

/// Titles go on a single line each so the candidate listing stays one entry per line.
fn one_line(title: &str) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn build_prompt(
    query: &Item,
    candidates: &[&Item],
    kind: AgentKind,
) -> Result<PromptBundle, AgentError> {
    build_prompt_with_limit(query, candidates, kind, DEFAULT_MAX_CANDIDATES)
}

pub fn build_prompt_with_limit(
    query: &Item,
    candidates: &[&Item],
    kind: AgentKind,
    max_candidates: usize,
) -> Result<PromptBundle, AgentError> {
    if candidates.is_empty() {
        return Err(AgentError::EmptyCandidates);
    }
    if candidates.len() > max_candidates {
        return Err(AgentError::TooManyCandidates {
            got: candidates.len(),
            max: max_candidates,
        });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = candidates.iter().find(|c| !seen.insert(c.id.as_str())) {
        return Err(AgentError::DuplicateCandidate(dup.id.clone()));
    }

    let mut listing = String::new();
    for (k, item) in candidates.iter().enumerate() {
        listing.push_str(&format!("ID:{k} title: {}\n", one_line(&item.title)));
    }

    let text = format!(
        "Considering a product, its basic information is:\n\
         {{title: {query_title}}}\n\
         \n\
         Here's a list of the candidate products:\n\
         {listing}\
         \n\
         {TASK_DEFINITION}\n\
         \n\
         {FEW_SHOT}\n\
         \n\
         {RANKING_INSTRUCTION}\n\
         {focus}\n\
         \n\
         {OUTPUT_FORMAT}\n",
        query_title = one_line(&query.title),
        focus = kind.ranking_focus(),
    );

    Ok(PromptBundle {
        query_id: query.id.clone(),
        text,
        index_to_id: candidates.iter().map(|c| c.id.clone()).collect(),
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item::new(format!("c{i}"), format!("Candidate {i}")))
            .collect()
    }

    #[test]
    fn single_candidate() {
        let q = Item::new("q", "Phone");
        let c = items(1);
        let refs: Vec<&Item> = c.iter().collect();
        let p = build_prompt(&q, &refs, AgentKind::Diversity).unwrap();
        assert!(p.text.contains("ID:0 title: Candidate 0\n"));
        assert!(!p.text.contains("ID:1"));
        assert_eq!(p.index_to_id, vec!["c0"]);
    }

    #[test]
    fn empty_and_oversized_rejected() {
        let q = Item::new("q", "Phone");
        assert!(matches!(
            build_prompt(&q, &[], AgentKind::Accuracy),
            Err(AgentError::EmptyCandidates)
        ));
        let c = items(101);
        let refs: Vec<&Item> = c.iter().collect();
        assert!(matches!(
            build_prompt(&q, &refs, AgentKind::Accuracy),
            Err(AgentError::TooManyCandidates { got: 101, max: 100 })
        ));
        assert!(build_prompt_with_limit(&q, &refs, AgentKind::Accuracy, 200).is_ok());
    }

    #[test]
    fn multiline_titles_are_flattened() {
        let q = Item::new("q", "Phone\nPro");
        let c = [Item::new("a", "Case\n\tBlack ")];
        let p = build_prompt(&q, &[&c[0]], AgentKind::Diversity).unwrap();
        assert!(p.text.contains("{title: Phone Pro}\n"));
        assert!(p.text.contains("ID:0 title: Case Black\n"));
    }

    #[test]
    fn duplicate_candidates_rejected() {
        let q = Item::new("q", "Phone");
        let c = items(2);
        assert!(matches!(
            build_prompt(&q, &[&c[0], &c[1], &c[0]], AgentKind::Diversity),
            Err(AgentError::DuplicateCandidate(_))
        ));
    }
}
