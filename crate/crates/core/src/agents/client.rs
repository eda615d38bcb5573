//! Blocking client for OpenAI-compatible chat-completions endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Agent, AgentError, PromptBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Base URL up to and including the API version, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset or empty means no
    /// `Authorization` header.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// Delay before the first retry; doubles on each subsequent one.
    #[serde(with = "millis")]
    pub initial_backoff: Duration,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "http://localhost:8000/v1".to_string(),
            model: "meta-llama/Llama-3.3-70B-Instruct".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            temperature: 0.0,
            max_retries: 3,
            timeout: Duration::from_secs(120),
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.timeout.is_zero() {
            return Err(AgentError::Config("timeout must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(AgentError::Config("temperature must be nonnegative".into()));
        }
        if self.model.is_empty() {
            return Err(AgentError::Config("model name is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(AgentError),
    Fatal(AgentError),
}

pub struct OpenAiClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl OpenAiClient {
    pub fn new(config: LlmConfig) -> Result<Self, AgentError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty());
        Ok(OpenAiClient {
            config,
            http,
            api_key,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        let mut req = self.http.post(self.config.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(AgentError::Timeout(self.config.timeout))
            }
            Err(e) => return Attempt::Retry(AgentError::Transport(e.to_string())),
        };
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Attempt::Retry(AgentError::Status {
                status: status.as_u16(),
                body: body.chars().take(512).collect(),
            });
        }
        let parsed: ChatResponse = match resp.json() {
            Ok(p) => p,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(AgentError::Timeout(self.config.timeout))
            }
            Err(e) => return Attempt::Fatal(AgentError::MalformedResponse(e.to_string())),
        };
        match parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
        {
            Some(text) => Attempt::Done(text),
            None => Attempt::Fatal(AgentError::MalformedResponse(
                "response carries no message content".into(),
            )),
        }
    }

    /// Sends `prompt` as a single user message, retrying transport failures
    /// and non-2xx statuses with exponential backoff.
    pub fn complete_text(&self, prompt: &str) -> Result<String, AgentError> {
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(prompt) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if attempt >= self.config.max_retries => {
                    return Err(AgentError::RetriesExhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Attempt::Retry(e) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "chat completion failed, retrying");
                    std::thread::sleep(backoff);
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}

impl Agent for OpenAiClient {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, AgentError> {
        self.complete_text(&prompt.text)
    }
}

/// Convenience wrapper matching the one-shot call shape.
pub fn complete(prompt: &PromptBundle, config: &LlmConfig) -> Result<String, AgentError> {
    OpenAiClient::new(config.clone())?.complete(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joins_cleanly() {
        let c = LlmConfig {
            base_url: "http://h:1/v1/".into(),
            ..LlmConfig::default()
        };
        assert_eq!(c.endpoint(), "http://h:1/v1/chat/completions");
    }

    #[test]
    fn zero_timeout_rejected() {
        let c = LlmConfig {
            timeout: Duration::ZERO,
            ..LlmConfig::default()
        };
        assert!(OpenAiClient::new(c).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = LlmConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"timeout\":120000"));
        assert_eq!(serde_json::from_str::<LlmConfig>(&s).unwrap(), c);
    }
}
