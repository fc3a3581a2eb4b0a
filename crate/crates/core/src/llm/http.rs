// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{apply_stop, approximate_tokens, Completion, FinishReason, LlmClient, LlmConfig, LlmError};
use crate::prompts::{PromptBody, RenderedPrompt};

/// Endpoint path and JSON body for a prompt. Pure, so identical prompts
/// always produce identical payloads.
pub fn request_payload(config: &LlmConfig, prompt: &RenderedPrompt) -> (&'static str, Value) {
    let mut body = json!({
        "model": config.model_id,
        "temperature": config.temperature,
        "top_p": config.top_p,
        "max_tokens": config.max_tokens,
    });
    if !prompt.stop.is_empty() {
        body["stop"] = json!(prompt.stop);
    }
    match &prompt.body {
        PromptBody::Messages(msgs) => {
            body["messages"] = msgs
                .iter()
                .map(|m| json!({"role": m.role.as_str(), "content": m.text}))
                .collect();
            ("/chat/completions", body)
        }
        PromptBody::Completion(text) => {
            body["prompt"] = json!(text);
            ("/completions", body)
        }
    }
}

/// Blocking client for OpenAI-compatible servers.
pub struct HttpClient {
    config: LlmConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    /// Attempts made by the most recent request.
    pub last_attempts: u32,
}

enum Attempt {
    Done(Completion),
    Retry(String),
}

impl HttpClient {
    /// Reads the API key from `config.api_key_env`. An empty variable name
    /// disables authentication (local serving layers).
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(
                std::env::var(&config.api_key_env)
                    .map_err(|_| LlmError::MissingApiKey(config.api_key_env.clone()))?,
            )
        };
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout)))
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
            last_attempts: 0,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn attempt(&self, url: &str, payload: &Value, prompt: &RenderedPrompt) -> Result<Attempt, LlmError> {
        let started = Instant::now();
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = match req.send_json(payload) {
            Ok(r) => r,
            Err(
                e @ (ureq::Error::Io(_)
                | ureq::Error::Timeout(_)
                | ureq::Error::ConnectionFailed
                | ureq::Error::HostNotFound
                | ureq::Error::Protocol(_)),
            ) => return Ok(Attempt::Retry(e.to_string())),
            Err(e) => {
                return Err(LlmError::Transport {
                    endpoint: url.to_string(),
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let body = match resp.into_body().read_to_string() {
            Ok(b) => b,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(LlmError::Auth {
                    endpoint: url.to_string(),
                    status,
                })
            }
            408 | 429 | 500..=599 => return Ok(Attempt::Retry(format!("HTTP {status}"))),
            _ => {
                return Err(LlmError::Http {
                    endpoint: url.to_string(),
                    status,
                    body: body.chars().take(500).collect(),
                })
            }
        }
        let mut c = parse_response(&body, prompt)?;
        c.latency = started.elapsed().as_secs_f64();
        Ok(Attempt::Done(c))
    }
}

fn parse_response(body: &str, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Malformed(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Malformed("no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Malformed("choice carries no text".into()))?;
    let text = apply_stop(text, &prompt.stop);
    let finish_reason = FinishReason::from_api(choice.get("finish_reason").and_then(Value::as_str));
    let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64);
    let (input_tokens, output_tokens, approximate) =
        match (usage("prompt_tokens"), usage("completion_tokens")) {
            (Some(i), Some(o)) => (i, o, false),
            _ => (
                approximate_tokens(&prompt.flat_text()),
                approximate_tokens(&text),
                true,
            ),
        };
    Ok(Completion {
        text,
        input_tokens,
        output_tokens,
        latency: 0.0,
        finish_reason,
        approximate,
    })
}

impl LlmClient for HttpClient {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let (path, payload) = request_payload(&self.config, prompt);
        let url = format!("{}{path}", self.config.endpoint_url.trim_end_matches('/'));
        let mut last = String::new();
        for attempt in 0..self.config.retry_limit {
            self.last_attempts = attempt + 1;
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            match self.attempt(&url, &payload, prompt)? {
                Attempt::Done(c) => {
                    log::info!("{url}: attempt {} succeeded", attempt + 1);
                    return Ok(c);
                }
                Attempt::Retry(reason) => {
                    log::warn!("{url}: attempt {} failed: {reason}", attempt + 1);
                    last = reason;
                }
            }
        }
        Err(LlmError::RetriesExhausted {
            endpoint: url,
            attempts: self.config.retry_limit,
            last,
        })
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }
}
