//! Proposal operators: prompt construction, response extraction, repair, and
//! the scripted mutation bank used offline.

mod llm;
mod mock;
mod prompt;
mod repair;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use llm::{
    BackoffRecord, CacheMode, CachedResponse, ChatClient, ChatReply, LlmOperator, NoClient, TranscriptCache,
};
pub use mock::{propose_mock, MockOperator, Mutation};
pub use prompt::{build_prompt, build_repair_prompt, ParentPayload, PromptBundle, DEFAULT_PROMPT_CAP, GRAMMAR_REFERENCE};
pub use repair::{repair_loop, RepairOutcome, RepairRecord, DEFAULT_MAX_RETRIES};

use crate::evolution::{Candidate, Phase};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("operator unavailable: {0}")]
    Unavailable(String),
    #[error("authentication: {0}")]
    Auth(String),
    #[error("no cached response for prompt {0} (replay-only mode)")]
    CacheMiss(String),
    #[error("response contains no fenced code blocks")]
    NoBlocksFound,
    #[error("operator cannot {0}")]
    Unsupported(&'static str),
}

impl OperatorError {
    /// Errors that must abort a run rather than count against one candidate.
    pub fn is_fatal(&self) -> bool {
        matches!(self, OperatorError::Unavailable(_) | OperatorError::Auth(_) | OperatorError::CacheMiss(_))
    }
}

/// One offspring source and the index of the parent it was derived from, when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub source: String,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: String,
    pub prompt_digest: String,
    pub response: String,
    pub extracted: Vec<String>,
    #[serde(default)]
    pub backoffs: Vec<BackoffRecord>,
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub cached: bool,
    /// Unix seconds; excluded from the digest.
    #[serde(default)]
    pub timestamp: u64,
}

/// Append-only log of operator calls.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, e: TranscriptEntry) {
        self.entries.push(e);
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            for part in [&e.kind, &e.prompt_digest, &e.response] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Context for one proposal round.
#[derive(Debug, Clone, Copy)]
pub struct ProposalRequest<'a> {
    pub parents: &'a [Candidate],
    pub phase: Phase,
    pub offspring: usize,
    pub iteration: usize,
}

pub trait Operator {
    fn name(&self) -> &'static str;

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>, OperatorError>;

    /// Asks for a corrected version of `source` given the error it produced.
    fn repair(&mut self, source: &str, error: &str, phase: Phase) -> Result<String, OperatorError>;

    fn transcript(&self) -> &Transcript;

    /// Restores the log when resuming a run.
    fn restore_transcript(&mut self, transcript: Transcript);
}

/// Fenced code blocks in order, without fence lines; surplus beyond `m` dropped.
pub fn extract_offspring(response: &str, m: usize) -> Result<Vec<String>, OperatorError> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in response.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n").trim().to_string());
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    blocks.retain(|b| !b.is_empty());
    if blocks.is_empty() {
        return Err(OperatorError::NoBlocksFound);
    }
    blocks.truncate(m);
    Ok(blocks)
}

#[cfg(test)]
mod tests;
