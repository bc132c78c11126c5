//! Judge-based aggregation: a second model reviews the ensemble's answers and
//! explanations and issues a confidence verdict, which maps directly onto the
//! uncertainty scale.

use serde_json::Value;

use crate::aggregator::{
    aggregate, AgentTrail, EnsemblePrediction, Method, TrailEntry, UncertaintyMode, WeightVector,
};
use crate::error::{Error, Result};
use crate::gateway::{
    query, Answer, Backend, CacheEntry, ParseStatus, PromptResponse, QueryContext, RawResponse,
    ResponseCache, AGENT_TEMPLATE_ID,
};
use crate::prompt_kit::build_agent_prompt;

/// The judge's five-way confidence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceCategory {
    DefinitelyYes,
    LikelyYes,
    DefinitelyNo,
    LikelyNo,
    Uncertain,
}

impl ConfidenceCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConfidenceCategory::DefinitelyYes => "Definitely Yes",
            ConfidenceCategory::LikelyYes => "Likely Yes",
            ConfidenceCategory::DefinitelyNo => "Definitely No",
            ConfidenceCategory::LikelyNo => "Likely No",
            ConfidenceCategory::Uncertain => "Uncertain",
        }
    }

    pub fn parse(s: &str) -> Option<ConfidenceCategory> {
        let normalized = s.trim().to_ascii_lowercase();
        match normalized.as_str() {
            "definitely yes" => Some(ConfidenceCategory::DefinitelyYes),
            "likely yes" => Some(ConfidenceCategory::LikelyYes),
            "definitely no" => Some(ConfidenceCategory::DefinitelyNo),
            "likely no" => Some(ConfidenceCategory::LikelyNo),
            "uncertain" => Some(ConfidenceCategory::Uncertain),
            _ => None,
        }
    }

    /// The verdict's decision, if it implies one.
    pub fn decision(&self) -> Option<Answer> {
        match self {
            ConfidenceCategory::DefinitelyYes | ConfidenceCategory::LikelyYes => Some(Answer::Yes),
            ConfidenceCategory::DefinitelyNo | ConfidenceCategory::LikelyNo => Some(Answer::No),
            ConfidenceCategory::Uncertain => None,
        }
    }
}

/// Definitely → 0, Likely → 0.5, Uncertain → 1.
pub fn category_to_uncertainty(category: ConfidenceCategory) -> f64 {
    match category {
        ConfidenceCategory::DefinitelyYes | ConfidenceCategory::DefinitelyNo => 0.0,
        ConfidenceCategory::LikelyYes | ConfidenceCategory::LikelyNo => 0.5,
        ConfidenceCategory::Uncertain => 1.0,
    }
}

fn verdict_from_object(value: &Value) -> Option<(ConfidenceCategory, String)> {
    let map = value.as_object()?;
    let category = ConfidenceCategory::parse(map.get("Decision")?.as_str()?)?;
    let explanation = map
        .get("Explanation")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    Some((category, explanation))
}

/// Find the first JSON object in the text whose "Decision" value is one of the
/// five categories.
pub fn parse_verdict(raw_text: &str) -> Result<(ConfidenceCategory, String)> {
    let trimmed = raw_text.trim();
    if let Ok(value) = serde_json::from_str::<Value>(trimmed) {
        if let Some(parsed) = verdict_from_object(&value) {
            return Ok(parsed);
        }
    }
    for (pos, _) in raw_text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw_text[pos..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Some(parsed) = verdict_from_object(&value) {
                return Ok(parsed);
            }
        }
    }
    Err(Error::VerdictParseFailure)
}

/// Resolve an "Uncertain" verdict into a decision from the ensemble's mean
/// yes-probability over parsed responses; a tie at 0.5 decides No.
pub fn resolve_uncertain(responses: &[PromptResponse]) -> Answer {
    let parsed: Vec<f64> = responses
        .iter()
        .filter(|r| r.parse_status != ParseStatus::Failed)
        .map(|r| r.p_yes)
        .collect();
    if parsed.is_empty() {
        return Answer::No;
    }
    let mean = parsed.iter().sum::<f64>() / parsed.len() as f64;
    Answer::from_bool(mean > 0.5)
}

fn parsed_mean_p(responses: &[PromptResponse]) -> Option<(f64, usize)> {
    let parsed: Vec<f64> = responses
        .iter()
        .filter(|r| r.parse_status != ParseStatus::Failed)
        .map(|r| r.p_yes)
        .collect();
    if parsed.is_empty() {
        None
    } else {
        Some((parsed.iter().sum::<f64>() / parsed.len() as f64, parsed.len()))
    }
}

fn fetch_verdict(
    judge: &dyn Backend,
    cache: &mut ResponseCache,
    prompt: &str,
    ctx: &QueryContext,
) -> Result<RawResponse> {
    if let Some(entry) = cache.get(judge, ctx) {
        return Ok(RawResponse {
            content: entry.raw_text.clone(),
            answer_logprobs: entry.logprobs(),
        });
    }
    let resp = query(judge, prompt, ctx)?;
    cache.put(CacheEntry::new(judge, ctx, &resp))?;
    Ok(resp)
}

/// Judge one case: build the review prompt from the ensemble responses, query
/// the judge (cache-aware), and turn the verdict into decision + uncertainty.
/// When the verdict cannot be obtained or parsed, the case falls back to
/// uniform-weight entropy aggregation and the trail is flagged.
pub fn agent_aggregate(
    responses: &[PromptResponse],
    judge: &dyn Backend,
    cache: &mut ResponseCache,
) -> Result<EnsemblePrediction> {
    if responses.is_empty() {
        return Err(Error::NoParsedResponses);
    }
    let uniform = WeightVector::uniform(responses.len())?;
    let fallback = |cache_note: String| -> Result<EnsemblePrediction> {
        let mut pred = aggregate(
            Method::Agent,
            responses,
            &uniform,
            UncertaintyMode::MixtureEntropy,
        )?;
        pred.agent = Some(AgentTrail {
            category: String::new(),
            explanation: cache_note,
            fallback: true,
        });
        Ok(pred)
    };

    let prompt = match build_agent_prompt(responses, &responses[0].label_name) {
        Ok(p) => p,
        // every template failed to parse: nothing to judge
        Err(Error::NoParsedResponses) => {
            return fallback("no parsed ensemble answers to judge".into())
        }
        Err(e) => return Err(e),
    };
    let ctx = QueryContext {
        report_id: responses[0].report_id.clone(),
        label_name: responses[0].label_name.clone(),
        template_id: AGENT_TEMPLATE_ID,
        attempt: 0,
    };
    let raw = match fetch_verdict(judge, cache, &prompt, &ctx) {
        Ok(raw) => raw,
        Err(e) => return fallback(format!("judge query failed: {e}")),
    };
    let (category, explanation) = match parse_verdict(&raw.content) {
        Ok(v) => v,
        Err(_) => return fallback(format!("unparseable judge verdict: {}", raw.content)),
    };

    let decision = category
        .decision()
        .unwrap_or_else(|| resolve_uncertain(responses));
    let (p_hat, parsed_count) = parsed_mean_p(responses).unwrap_or((0.5, 0));
    let trail: Vec<TrailEntry> = responses
        .iter()
        .map(|r| TrailEntry {
            template_id: r.template_id,
            p_yes: r.p_yes,
            weight: if r.parse_status == ParseStatus::Failed || parsed_count == 0 {
                0.0
            } else {
                1.0 / parsed_count as f64
            },
            parse_status: r.parse_status,
        })
        .collect();
    Ok(EnsemblePrediction {
        report_id: responses[0].report_id.clone(),
        label_name: responses[0].label_name.clone(),
        method: Method::Agent,
        p_hat,
        decision,
        uncertainty: category_to_uncertainty(category),
        trail,
        agent: Some(AgentTrail {
            category: category.as_str().to_string(),
            explanation,
            fallback: false,
        }),
        all_failed: parsed_count == 0,
    })
}
