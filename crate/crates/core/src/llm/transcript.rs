// SPDX-License-Identifier: Apache-2.0

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{prompt_digest, Completion, FinishReason, LlmClient, LlmError};
use crate::prompts::RenderedPrompt;

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub prompt: String,
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency: f64,
    #[serde(default)]
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub approximate: bool,
}

impl TranscriptEntry {
    pub fn new(prompt: &RenderedPrompt, c: &Completion) -> Self {
        let canonical = prompt.canonical();
        Self {
            digest: prompt_digest(&canonical),
            prompt: canonical,
            text: c.text.clone(),
            input_tokens: c.input_tokens,
            output_tokens: c.output_tokens,
            latency: c.latency,
            finish_reason: c.finish_reason,
            approximate: c.approximate,
        }
    }

    pub fn completion(&self) -> Completion {
        Completion {
            text: self.text.clone(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
            latency: self.latency,
            finish_reason: self.finish_reason,
            approximate: self.approximate,
        }
    }
}

fn transcript_err(path: &Path, message: impl Into<String>) -> LlmError {
    LlmError::Transcript {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Loads and checks a transcript: every stored digest must match its prompt.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let file = File::open(path).map_err(|e| transcript_err(path, e.to_string()))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| transcript_err(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line)
            .map_err(|e| transcript_err(path, format!("line {}: {e}", i + 1)))?;
        if prompt_digest(&entry.prompt) != entry.digest {
            return Err(transcript_err(
                path,
                format!("line {}: digest does not match the stored prompt", i + 1),
            ));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Wraps a client and appends every exchange to a transcript file.
pub struct Recorder<C> {
    inner: C,
    path: PathBuf,
    sink: File,
}

impl<C: LlmClient> Recorder<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| transcript_err(&path, e.to_string()))?;
        }
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| transcript_err(&path, e.to_string()))?;
        Ok(Self { inner, path, sink })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: LlmClient> LlmClient for Recorder<C> {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let c = self.inner.complete(prompt)?;
        let line = serde_json::to_string(&TranscriptEntry::new(prompt, &c))
            .map_err(|e| transcript_err(&self.path, e.to_string()))?;
        writeln!(self.sink, "{line}")
            .and_then(|_| self.sink.flush())
            .map_err(|e| transcript_err(&self.path, e.to_string()))?;
        Ok(c)
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Prompt digests must match entry by entry.
    #[default]
    Strict,
    /// Entries are served in order; digest mismatches are only logged.
    Lenient,
}

/// Serves a recorded transcript back in order, without network access.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    model_id: String,
    entries: Vec<TranscriptEntry>,
    cursor: usize,
    mode: ReplayMode,
}

impl ReplayClient {
    pub fn new(model_id: impl Into<String>, entries: Vec<TranscriptEntry>, mode: ReplayMode) -> Self {
        Self {
            model_id: model_id.into(),
            entries,
            cursor: 0,
            mode,
        }
    }

    pub fn open(model_id: impl Into<String>, path: &Path, mode: ReplayMode) -> Result<Self, LlmError> {
        Ok(Self::new(model_id, read_transcript(path)?, mode))
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// 1-based line number and contents of the first difference.
fn first_difference(expected: &str, actual: &str) -> (usize, String, String) {
    let mut e = expected.lines();
    let mut a = actual.lines();
    let mut n = 1;
    loop {
        match (e.next(), a.next()) {
            (Some(x), Some(y)) if x == y => n += 1,
            (None, None) => return (n, String::new(), String::new()),
            (x, y) => {
                let show = |s: Option<&str>| s.map(str::to_string).unwrap_or_else(|| "<end of prompt>".into());
                return (n, show(x), show(y));
            }
        }
    }
}

impl LlmClient for ReplayClient {
    fn complete(&mut self, prompt: &RenderedPrompt) -> Result<Completion, LlmError> {
        let entry = self
            .entries
            .get(self.cursor)
            .ok_or(LlmError::Exhausted(self.entries.len()))?;
        let canonical = prompt.canonical();
        if prompt_digest(&canonical) != entry.digest {
            let (line, expected, actual) = first_difference(&entry.prompt, &canonical);
            match self.mode {
                ReplayMode::Strict => {
                    return Err(LlmError::DigestMismatch {
                        entry: self.cursor,
                        line,
                        expected,
                        actual,
                    })
                }
                ReplayMode::Lenient => log::warn!(
                    "transcript entry {} differs at prompt line {line}: expected {expected:?}, got {actual:?}",
                    self.cursor
                ),
            }
        }
        self.cursor += 1;
        Ok(entry.completion())
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;
    use crate::prompts::{flat_prompt, PromptMode};

    fn prompts() -> Vec<RenderedPrompt> {
        ["design a", "design b", "design c"]
            .iter()
            .map(|t| flat_prompt(t, "top", PromptMode::Conversational))
            .collect()
    }

    fn record(path: &Path) -> Vec<Completion> {
        let script = ScriptedClient::new("m", ["one".to_string(), "two two".into(), "three".into()]);
        let mut rec = Recorder::new(script, path).unwrap();
        prompts().iter().map(|p| rec.complete(p).unwrap()).collect()
    }

    #[test]
    fn record_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        let live = record(&path);
        let entries = read_transcript(&path).unwrap();
        assert_eq!(entries.len(), 3);
        for (e, p) in entries.iter().zip(prompts()) {
            assert_eq!(e.digest, prompt_digest(&p.canonical()));
        }
        let mut replay = ReplayClient::open("m", &path, ReplayMode::Strict).unwrap();
        let replayed: Vec<_> = prompts().iter().map(|p| replay.complete(p).unwrap()).collect();
        assert_eq!(replayed, live);
        let err = replay.complete(&prompts()[0]).unwrap_err();
        assert_eq!(err.to_string(), "transcript exhausted after 3 entries");
    }

    #[test]
    fn strict_mismatch_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        record(&path);
        let mut replay = ReplayClient::open("m", &path, ReplayMode::Strict).unwrap();
        let edited = flat_prompt("design z", "top", PromptMode::Conversational);
        match replay.complete(&edited).unwrap_err() {
            LlmError::DigestMismatch { entry, line, expected, actual } => {
                assert_eq!(entry, 0);
                assert_eq!(expected, "design a");
                assert_eq!(actual, "design z");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(replay.cursor(), 0);

        let mut lenient = ReplayClient::open("m", &path, ReplayMode::Lenient).unwrap();
        assert_eq!(lenient.complete(&edited).unwrap().text, "one");
    }

    #[test]
    fn tampered_transcript_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        record(&path);
        let text = std::fs::read_to_string(&path).unwrap().replacen("design a", "design q", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(read_transcript(&path), Err(LlmError::Transcript { .. })));
    }

    #[test]
    fn entry_fields_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        record(&path);
        let first = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        for k in ["digest", "prompt", "text", "input_tokens", "output_tokens", "latency"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }
}
