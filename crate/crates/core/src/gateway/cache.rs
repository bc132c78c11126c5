//! Append-only line-delimited JSON response cache. The attempt number is part
//! of the key so retried samples stay auditable; a warm cache makes reruns
//! bit-identical with zero network calls.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Backend, QueryContext, RawResponse};

const SEP: char = '\u{1f}';

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend_id: String,
    pub model_name: String,
    pub temperature: f64,
    pub template_id: u32,
    pub label_name: String,
    pub report_id: String,
    pub attempt: u32,
    pub raw_text: String,
    pub logprob_yes: Option<f64>,
    pub logprob_no: Option<f64>,
}

impl CacheEntry {
    pub fn new(backend: &dyn Backend, ctx: &QueryContext, response: &RawResponse) -> Self {
        let cfg = backend.config();
        CacheEntry {
            backend_id: backend.id().to_string(),
            model_name: cfg.model_name.clone(),
            temperature: cfg.temperature,
            template_id: ctx.template_id,
            label_name: ctx.label_name.clone(),
            report_id: ctx.report_id.clone(),
            attempt: ctx.attempt,
            raw_text: response.content.clone(),
            logprob_yes: response.answer_logprobs.map(|(y, _)| y),
            logprob_no: response.answer_logprobs.map(|(_, n)| n),
        }
    }

    pub fn logprobs(&self) -> Option<(f64, f64)> {
        match (self.logprob_yes, self.logprob_no) {
            (Some(y), Some(n)) => Some((y, n)),
            _ => None,
        }
    }

    fn key(&self) -> String {
        make_key(
            &self.backend_id,
            &self.model_name,
            self.temperature,
            self.template_id,
            &self.label_name,
            &self.report_id,
            self.attempt,
        )
    }
}

fn make_key(
    backend_id: &str,
    model_name: &str,
    temperature: f64,
    template_id: u32,
    label_name: &str,
    report_id: &str,
    attempt: u32,
) -> String {
    format!("{backend_id}{SEP}{model_name}{SEP}{temperature:?}{SEP}{template_id}{SEP}{label_name}{SEP}{report_id}{SEP}{attempt}")
}

/// In-memory map backed by an optional append-only file.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: HashMap<String, CacheEntry>,
    hits: u64,
    misses: u64,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            entries: HashMap::new(),
            hits: 0,
            misses: 0,
        }
    }

    /// Open (and load) a cache file; created on first write if absent.
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = ResponseCache {
            path: Some(path.to_path_buf()),
            entries: HashMap::new(),
            hits: 0,
            misses: 0,
        };
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                cache.entries.insert(entry.key(), entry);
            }
        }
        Ok(cache)
    }

    pub fn get(&mut self, backend: &dyn Backend, ctx: &QueryContext) -> Option<&CacheEntry> {
        let cfg = backend.config();
        let key = make_key(
            backend.id(),
            &cfg.model_name,
            cfg.temperature,
            ctx.template_id,
            &ctx.label_name,
            &ctx.report_id,
            ctx.attempt,
        );
        if self.entries.contains_key(&key) {
            self.hits += 1;
            self.entries.get(&key)
        } else {
            self.misses += 1;
            None
        }
    }

    pub fn put(&mut self, entry: CacheEntry) -> Result<()> {
        if let Some(path) = &self.path {
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let line = serde_json::to_string(&entry)?;
            writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        }
        self.entries.insert(entry.key(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}
