//! HTTP chat-completion backend. Speaks the common open-model server protocol:
//! POST /chat/completions with model/messages/temperature and optional
//! log-probability flags; the answer is read from the first choice's message
//! content.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gateway::{Backend, BackendConfig, LogprobSupport, QueryContext, RawResponse};

pub struct HttpBackend {
    id: String,
    config: BackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(id: &str, config: BackendConfig, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                last: e.to_string(),
            })?;
        Ok(HttpBackend {
            id: id.to_string(),
            config,
            api_key,
            client,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

fn normalize_token(token: &str) -> String {
    token
        .trim()
        .trim_matches(|c: char| c == '"' || c == '\'' || c == ':' || c == ',')
        .to_ascii_lowercase()
}

/// Pull (log p(yes), log p(no)) out of a response's token log-probabilities.
/// Finds the first content token that normalizes to yes/no and looks up its
/// counterpart among that position's top alternatives; if the counterpart is
/// absent, its mass is bounded by the complement.
fn extract_answer_logprobs(choice: &Value) -> Option<(f64, f64)> {
    let content = choice.get("logprobs")?.get("content")?.as_array()?;
    for entry in content {
        let token = normalize_token(entry.get("token")?.as_str()?);
        if token != "yes" && token != "no" {
            continue;
        }
        let own = entry.get("logprob")?.as_f64()?;
        let counterpart_name = if token == "yes" { "no" } else { "yes" };
        let mut counterpart = None;
        if let Some(tops) = entry.get("top_logprobs").and_then(|v| v.as_array()) {
            for alt in tops {
                let alt_token = alt
                    .get("token")
                    .and_then(|t| t.as_str())
                    .map(normalize_token);
                if alt_token.as_deref() == Some(counterpart_name) {
                    counterpart = alt.get("logprob").and_then(|l| l.as_f64());
                    break;
                }
            }
        }
        let other = counterpart.unwrap_or_else(|| {
            let residual = (1.0 - own.exp()).max(1e-12);
            residual.ln()
        });
        return if token == "yes" {
            Some((own, other))
        } else {
            Some((other, own))
        };
    }
    None
}

/// Parse a chat-completion response body into content + answer logprobs.
pub fn parse_chat_response(body: &Value) -> Result<RawResponse> {
    let choice = body
        .get("choices")
        .and_then(|c| c.as_array())
        .and_then(|c| c.first())
        .ok_or_else(|| Error::Transport {
            attempts: 1,
            last: "response has no choices".into(),
        })?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .ok_or_else(|| Error::Transport {
            attempts: 1,
            last: "choice has no message content".into(),
        })?
        .to_string();
    Ok(RawResponse {
        answer_logprobs: extract_answer_logprobs(choice),
        content,
    })
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str, _ctx: &QueryContext) -> Result<RawResponse> {
        let want_logprobs = self.config.logprob_support != LogprobSupport::No;
        let mut body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        });
        if want_logprobs {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(5);
        }
        let mut request = self.client.post(self.endpoint()).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Error::Transport {
            attempts: 1,
            last: e.to_string(),
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::Transport {
                attempts: 1,
                last: format!("HTTP {status}"),
            });
        }
        let value: Value = response.json().map_err(|e| Error::Transport {
            attempts: 1,
            last: e.to_string(),
        })?;
        parse_chat_response(&value)
    }
}
