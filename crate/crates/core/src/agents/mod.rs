//! LLM reranking agents: prompt rendering, transport and answer parsing.

mod client;
mod mock;
mod parse;
mod prompt;

use std::time::Duration;

use thiserror::Error;

pub use client::{complete, LlmConfig, OpenAiClient};
pub use mock::{format_order, MockAgent, MockPolicy};
pub use parse::{parse_permutation, ParsedPermutation, Repair};
pub use prompt::{
    build_prompt, build_prompt_with_limit, AgentKind, PromptBundle, DEFAULT_MAX_CANDIDATES,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("{got} candidates exceed the prompt limit of {max}")]
    TooManyCandidates { got: usize, max: usize },
    #[error("candidate {0:?} listed twice")]
    DuplicateCandidate(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<AgentError>,
    },
}

/// Something that answers a rendered prompt with raw text.
pub trait Agent: Send + Sync {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, AgentError>;
}

impl<A: Agent + ?Sized> Agent for &A {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, AgentError> {
        (**self).complete(prompt)
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, AgentError> {
        (**self).complete(prompt)
    }
}
