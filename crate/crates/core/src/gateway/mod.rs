//! Chat-completion gateway: backends (HTTP or deterministic mock), structured
//! answer parsing, yes-probability extraction, and the response cache that makes
//! evaluation reruns hit zero network calls.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::prompt_kit::PromptSet;

pub mod cache;
pub mod http;
pub mod mock;

pub use cache::{CacheEntry, ResponseCache};

/// Template id used for judge queries in cache keys; ensemble templates are 1-based.
pub const AGENT_TEMPLATE_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn as_bool(self) -> bool {
        self == Answer::Yes
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStatus {
    /// The whole response body is the answer object.
    Parsed,
    /// The answer object was embedded in surrounding prose.
    Recovered,
    Failed,
}

/// One LLM answer for one (report, label, template).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptResponse {
    pub report_id: String,
    pub label_name: String,
    pub template_id: u32,
    pub answer: Answer,
    pub p_yes: f64,
    pub explanation: String,
    pub parse_status: ParseStatus,
    pub raw_text: String,
}

impl PromptResponse {
    /// Fallback entry for a template whose response could not be parsed:
    /// answer No, p_yes 0.5, flagged failed. Aggregation excludes these.
    pub fn failed(report_id: &str, label_name: &str, template_id: u32, raw_text: String) -> Self {
        PromptResponse {
            report_id: report_id.to_string(),
            label_name: label_name.to_string(),
            template_id,
            answer: Answer::No,
            p_yes: 0.5,
            explanation: String::new(),
            parse_status: ParseStatus::Failed,
            raw_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogprobSupport {
    Yes,
    No,
    Auto,
}

#[derive(Debug, Clone)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub request_timeout: Duration,
    pub logprob_support: LogprobSupport,
    /// Base backoff between retry attempts; doubled per attempt.
    pub retry_backoff: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: String::new(),
            model_name: "default".into(),
            temperature: 0.0,
            max_retries: 3,
            request_timeout: Duration::from_secs(60),
            logprob_support: LogprobSupport::Auto,
            retry_backoff: Duration::from_millis(200),
        }
    }
}

/// Identifies one completion request for caching and mock determinism.
#[derive(Debug, Clone)]
pub struct QueryContext {
    pub report_id: String,
    pub label_name: String,
    pub template_id: u32,
    pub attempt: u32,
}

/// Raw completion body plus the answer token's log-probabilities when the
/// backend returned them: (log p(yes-token), log p(no-token)).
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub content: String,
    pub answer_logprobs: Option<(f64, f64)>,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn config(&self) -> &BackendConfig;
    /// One request attempt, no retries.
    fn attempt(&self, prompt: &str, ctx: &QueryContext) -> Result<RawResponse>;
}

/// Query with retries and exponential backoff; `max_retries` additional
/// attempts after the first.
pub fn query(backend: &dyn Backend, prompt: &str, ctx: &QueryContext) -> Result<RawResponse> {
    let cfg = backend.config();
    let mut last = String::new();
    let attempts = cfg.max_retries + 1;
    for i in 0..attempts {
        match backend.attempt(prompt, ctx) {
            Ok(resp) => return Ok(resp),
            Err(e) => {
                last = e.to_string();
                if i + 1 < attempts && !cfg.retry_backoff.is_zero() {
                    std::thread::sleep(cfg.retry_backoff * 2u32.pow(i));
                }
            }
        }
    }
    Err(Error::Transport { attempts, last })
}

fn normalize_answer(value: &Value) -> Option<Answer> {
    let s = value.as_str()?.trim();
    if s.eq_ignore_ascii_case("yes") {
        Some(Answer::Yes)
    } else if s.eq_ignore_ascii_case("no") {
        Some(Answer::No)
    } else {
        None
    }
}

fn answer_from_object(obj: &Value) -> Option<(Answer, String)> {
    let map = obj.as_object()?;
    let answer = normalize_answer(map.get("Answer")?)?;
    let explanation = map
        .get("Explanation")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    Some((answer, explanation))
}

/// Scan for the first syntactically valid JSON object with an "Answer" key
/// normalizing to Yes/No. Status is `Parsed` when the whole text is that
/// object, `Recovered` when it was embedded in prose.
pub fn parse_answer_json(raw_text: &str) -> Result<(Answer, String, ParseStatus)> {
    let trimmed = raw_text.trim();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        if let Some((answer, explanation)) = answer_from_object(&value) {
            return Ok((answer, explanation, ParseStatus::Parsed));
        }
    }
    for (pos, _) in raw_text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw_text[pos..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Some((answer, explanation)) = answer_from_object(&value) {
                return Ok((answer, explanation, ParseStatus::Recovered));
            }
        }
    }
    Err(Error::AnswerParseFailure)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ProbabilityStrategy {
    /// Softmax over the yes/no answer-token log-probabilities.
    Logprob,
    /// 1 if the parsed answer is Yes, else 0.
    Hard,
    /// Fraction of Yes among k sampled completions.
    Vote { k: u32 },
}

/// Two-logit softmax, stable under large magnitudes.
pub fn logprob_p_yes(l_yes: f64, l_no: f64) -> f64 {
    let m = l_yes.max(l_no);
    let ey = (l_yes - m).exp();
    let en = (l_no - m).exp();
    ey / (ey + en)
}

/// Extract a yes-probability from one response. For `Logprob` without token
/// log-probabilities, falls back to the hard answer when permitted.
pub fn extract_probability(
    response: &RawResponse,
    answer: Answer,
    strategy: ProbabilityStrategy,
    fallback_to_hard: bool,
) -> Result<f64> {
    match strategy {
        ProbabilityStrategy::Hard | ProbabilityStrategy::Vote { .. } => {
            Ok(if answer == Answer::Yes { 1.0 } else { 0.0 })
        }
        ProbabilityStrategy::Logprob => match response.answer_logprobs {
            Some((l_yes, l_no)) => Ok(logprob_p_yes(l_yes, l_no)),
            None if fallback_to_hard => Ok(if answer == Answer::Yes { 1.0 } else { 0.0 }),
            None => Err(Error::LogprobsUnavailable),
        },
    }
}

fn fetch_raw(
    backend: &dyn Backend,
    cache: &mut ResponseCache,
    prompt: &str,
    ctx: &QueryContext,
) -> Result<RawResponse> {
    if let Some(entry) = cache.get(backend, ctx) {
        return Ok(RawResponse {
            content: entry.raw_text.clone(),
            answer_logprobs: entry.logprobs(),
        });
    }
    let resp = query(backend, prompt, ctx)?;
    cache.put(CacheEntry::new(backend, ctx, &resp))?;
    Ok(resp)
}

/// Query every template of the set for one (report, label), cache-aware.
/// Per-template failures become `parse_status = Failed` entries; the ensemble
/// is never aborted. Output order matches the prompt set.
pub fn cached_ensemble_query(
    report_id: &str,
    report_text: &str,
    label_name: &str,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    cache: &mut ResponseCache,
    strategy: ProbabilityStrategy,
    fallback_to_hard: bool,
) -> Result<Vec<PromptResponse>> {
    let samples = match strategy {
        ProbabilityStrategy::Vote { k } => k.max(1),
        _ => 1,
    };
    let mut out = Vec::with_capacity(prompt_set.len());
    for template in &prompt_set.templates {
        let prompt = crate::prompt_kit::render_prompt(template, label_name, report_text)?;
        let mut parsed: Vec<(Answer, String, ParseStatus, RawResponse)> = Vec::new();
        let mut first_raw = String::new();
        for attempt in 0..samples {
            let ctx = QueryContext {
                report_id: report_id.to_string(),
                label_name: label_name.to_string(),
                template_id: template.template_id,
                attempt,
            };
            match fetch_raw(backend, cache, &prompt, &ctx) {
                Ok(raw) => {
                    if attempt == 0 {
                        first_raw = raw.content.clone();
                    }
                    if let Ok((answer, explanation, status)) = parse_answer_json(&raw.content) {
                        parsed.push((answer, explanation, status, raw));
                    }
                }
                Err(e) => {
                    if attempt == 0 {
                        first_raw = format!("<transport error: {e}>");
                    }
                }
            }
        }
        if parsed.is_empty() {
            out.push(PromptResponse::failed(
                report_id,
                label_name,
                template.template_id,
                first_raw,
            ));
            continue;
        }
        let (answer, p_yes) = match strategy {
            ProbabilityStrategy::Vote { .. } => {
                let yes = parsed.iter().filter(|(a, ..)| *a == Answer::Yes).count();
                let frac = yes as f64 / parsed.len() as f64;
                (Answer::from_bool(frac > 0.5), frac)
            }
            _ => {
                let (answer, _, _, raw) = &parsed[0];
                let p = extract_probability(raw, *answer, strategy, fallback_to_hard)?;
                (*answer, p)
            }
        };
        let (_, explanation, status, raw) = &parsed[0];
        out.push(PromptResponse {
            report_id: report_id.to_string(),
            label_name: label_name.to_string(),
            template_id: template.template_id,
            answer,
            p_yes,
            explanation: explanation.clone(),
            parse_status: *status,
            raw_text: raw.content.clone(),
        });
    }
    Ok(out)
}
