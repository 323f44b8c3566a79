use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, build_repair_prompt, prompt_digest};
use super::{
    extract_offspring, Operator, OperatorError, Proposal, ProposalRequest, Transcript, TranscriptEntry,
    DEFAULT_PROMPT_CAP,
};
use crate::evolution::Phase;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackoffRecord {
    pub attempt: u32,
    pub status: Option<u16>,
    pub delay_ms: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChatReply {
    pub text: String,
    pub backoffs: Vec<BackoffRecord>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// One chat completion: system + user message in, assistant text out.
pub trait ChatClient: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<ChatReply, OperatorError>;
}

/// Stand-in for replay-only runs; any call is an error.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClient;

impl ChatClient for NoClient {
    fn complete(&self, _system: &str, _user: &str) -> Result<ChatReply, OperatorError> {
        Err(OperatorError::Unavailable("no chat client configured".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    Off,
    /// Serve hits from disk, call the client on a miss and store the reply.
    Record,
    /// Serve hits from disk; a miss is an error and the network is never touched.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub digest: String,
    pub system: String,
    pub user: String,
    pub response: String,
}

/// Content-addressed store of responses keyed by prompt digest.
#[derive(Debug, Clone)]
pub struct TranscriptCache {
    pub dir: PathBuf,
    pub mode: CacheMode,
}

impl TranscriptCache {
    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode) -> io::Result<Self> {
        let dir = dir.into();
        if mode == CacheMode::Record {
            fs::create_dir_all(&dir)?;
        }
        Ok(TranscriptCache { dir, mode })
    }

    pub fn disabled() -> Self {
        TranscriptCache { dir: PathBuf::new(), mode: CacheMode::Off }
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn lookup(&self, digest: &str) -> Option<CachedResponse> {
        if self.mode == CacheMode::Off {
            return None;
        }
        let text = fs::read_to_string(self.path(digest)).ok()?;
        serde_json::from_str::<CachedResponse>(&text).ok().filter(|c| c.digest == digest)
    }

    pub fn store(&self, entry: &CachedResponse) -> io::Result<()> {
        if self.mode != CacheMode::Record {
            return Ok(());
        }
        let text = serde_json::to_string_pretty(entry).map_err(io::Error::other)?;
        fs::write(self.path(&entry.digest), text)
    }

    pub fn root(&self) -> &Path {
        &self.dir
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Operator backed by a chat-completions client with record/replay.
pub struct LlmOperator<C: ChatClient> {
    pub client: C,
    pub cache: TranscriptCache,
    pub prompt_cap: usize,
    transcript: Transcript,
}

impl<C: ChatClient> LlmOperator<C> {
    pub fn new(client: C, cache: TranscriptCache) -> Self {
        LlmOperator { client, cache, prompt_cap: DEFAULT_PROMPT_CAP, transcript: Transcript::default() }
    }

    fn call(&mut self, kind: &str, system: &str, user: &str) -> Result<(String, TranscriptEntry), OperatorError> {
        let digest = prompt_digest(system, user);
        let mut entry = TranscriptEntry {
            kind: kind.into(),
            prompt_digest: digest.clone(),
            response: String::new(),
            extracted: Vec::new(),
            backoffs: Vec::new(),
            prompt_tokens: None,
            completion_tokens: None,
            cached: false,
            timestamp: now(),
        };
        if let Some(hit) = self.cache.lookup(&digest) {
            entry.response = hit.response.clone();
            entry.cached = true;
            return Ok((hit.response, entry));
        }
        if self.cache.mode == CacheMode::Replay {
            return Err(OperatorError::CacheMiss(digest));
        }
        let reply = self.client.complete(system, user)?;
        self.cache
            .store(&CachedResponse {
                digest: digest.clone(),
                system: system.into(),
                user: user.into(),
                response: reply.text.clone(),
            })
            .map_err(|e| OperatorError::Unavailable(format!("cannot write transcript cache: {e}")))?;
        entry.response = reply.text.clone();
        entry.backoffs = reply.backoffs;
        entry.prompt_tokens = reply.prompt_tokens;
        entry.completion_tokens = reply.completion_tokens;
        Ok((reply.text, entry))
    }
}

impl<C: ChatClient> Operator for LlmOperator<C> {
    fn name(&self) -> &'static str {
        "live"
    }

    fn propose(&mut self, req: &ProposalRequest<'_>) -> Result<Vec<Proposal>, OperatorError> {
        let bundle = build_prompt(req.parents, req.phase, req.offspring, req.iteration, self.prompt_cap);
        let (text, mut entry) = self.call("propose", &bundle.system_text, &bundle.user_text)?;
        let blocks = extract_offspring(&text, req.offspring);
        entry.extracted = blocks.clone().unwrap_or_default();
        self.transcript.push(entry);
        Ok(blocks?.into_iter().map(|source| Proposal { source, parent: None }).collect())
    }

    fn repair(&mut self, source: &str, error: &str, phase: Phase) -> Result<String, OperatorError> {
        let (system, user) = build_repair_prompt(source, error, phase);
        let (text, mut entry) = self.call("repair", &system, &user)?;
        let blocks = extract_offspring(&text, 1);
        entry.extracted = blocks.clone().unwrap_or_default();
        self.transcript.push(entry);
        Ok(blocks?.remove(0))
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn restore_transcript(&mut self, transcript: Transcript) {
        self.transcript = transcript;
    }
}
