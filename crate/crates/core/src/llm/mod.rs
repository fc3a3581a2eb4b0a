// SPDX-License-Identifier: Apache-2.0

//! Model access behind one trait: a live OpenAI-compatible HTTP client, a
//! recorder that appends every exchange to a transcript, a replayer that
//! serves a transcript back without touching the network, and a scripted
//! client for fixtures.

mod http;
mod transcript;

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::{PromptMode, RenderedPrompt, DEFAULT_MAX_TOKENS};

pub use http::{request_payload, HttpClient};
pub use transcript::{read_transcript, Recorder, ReplayClient, ReplayMode, TranscriptEntry};

pub const DEFAULT_API_KEY_ENV: &str = "ROME_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("authentication failed at {endpoint} (HTTP {status})")]
    Auth { endpoint: String, status: u16 },
    #[error("HTTP {status} from {endpoint}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("request to {endpoint} failed after {attempts} attempts: {last}")]
    RetriesExhausted {
        endpoint: String,
        attempts: u32,
        last: String,
    },
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("transcript exhausted after {0} entries")]
    Exhausted(usize),
    #[error("prompt differs from transcript entry {entry} at line {line}: expected {expected:?}, got {actual:?}")]
    DigestMismatch {
        entry: usize,
        line: usize,
        expected: String,
        actual: String,
    },
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error("scripted client has no responses left")]
    ScriptExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_api(s: Option<&str>) -> Self {
        match s {
            Some("stop") | Some("eos") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Seconds.
    pub latency: f64,
    pub finish_reason: FinishReason,
    /// Token counts were estimated locally rather than reported.
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Base URL; `/chat/completions` or `/completions` is appended.
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub mode: PromptMode,
    pub retry_limit: u32,
    /// First retry delay in seconds; doubles on every further retry.
    pub retry_backoff: f64,
    /// Per-request timeout in seconds.
    pub request_timeout: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            model_id: "gpt-4".into(),
            temperature: 0.5,
            top_p: 0.9,
            max_tokens: DEFAULT_MAX_TOKENS,
            endpoint_url: "https://api.openai.com/v1".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            mode: PromptMode::Conversational,
            retry_limit: 3,
            retry_backoff: 1.0,
            request_timeout: 300.0,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::Config(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be positive".into()));
        }
        if self.retry_limit == 0 {
            return Err(LlmError::Config("retry_limit must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(LlmError::Config("model_id is empty".into()));
        }
        Ok(())
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_secs_f64(self.retry_backoff.max(0.0) * 2f64.powi(retry as i32))
    }
}

/// Anything that turns a prompt into a completion.
pub trait LlmClient: Send {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError>;
    fn model_id(&self) -> &str;
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        (**self).complete(prompt)
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Hash of the canonical prompt serialization, hex encoded.
pub fn prompt_digest(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Whitespace token count, used when an endpoint reports no usage.
pub fn approximate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Cuts `text` before the earliest stop sequence.
pub fn apply_stop(text: &str, stop: &[String]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// Serves canned responses in order; token counts are estimated.
#[derive(Debug, Clone)]
pub struct ScriptedClient {
    model_id: String,
    responses: VecDeque<String>,
}

impl ScriptedClient {
    pub fn new(model_id: impl Into<String>, responses: impl IntoIterator<Item = String>) -> Self {
        Self {
            model_id: model_id.into(),
            responses: responses.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let text = self.responses.pop_front().ok_or(LlmError::ScriptExhausted)?;
        let text = apply_stop(&text, &prompt.stop);
        Ok(Completion {
            input_tokens: approximate_tokens(&prompt.flat_text()),
            output_tokens: approximate_tokens(&text),
            text,
            latency: 0.0,
            finish_reason: FinishReason::Stop,
            approximate: true,
        })
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let c = LlmConfig::default();
        assert_eq!(c.temperature, 0.5);
        assert_eq!(c.top_p, 0.9);
        assert_eq!(c.api_key_env, "ROME_API_KEY");
        c.validate().unwrap();
    }

    #[test]
    fn config_bounds() {
        let bad = |f: fn(&mut LlmConfig)| {
            let mut c = LlmConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.temperature = 2.5));
        assert!(bad(|c| c.top_p = 0.0));
        assert!(bad(|c| c.top_p = 1.1));
        assert!(bad(|c| c.max_tokens = 0));
        assert!(!bad(|c| c.temperature = 0.0));
    }

    #[test]
    fn stop_truncates_at_first_boundary() {
        let stop = vec!["endmodule".to_string()];
        assert_eq!(apply_stop("a;\nendmodule\nmodule tb; endmodule", &stop), "a;\n");
        assert_eq!(apply_stop("no stop here", &stop), "no stop here");
        assert_eq!(apply_stop("x", &[]), "x");
    }

    #[test]
    fn backoff_doubles() {
        let c = LlmConfig {
            retry_backoff: 0.5,
            ..Default::default()
        };
        assert_eq!(c.backoff(0), Duration::from_millis(500));
        assert_eq!(c.backoff(2), Duration::from_secs(2));
    }

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            prompt_digest(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
