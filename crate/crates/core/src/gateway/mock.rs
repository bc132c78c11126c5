//! Deterministic mock backends. Responses are a pure function of the query key
//! and the mock seed, so full runs over the bundled corpus are bit-reproducible.
//! The basis of all golden tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::gateway::{Backend, BackendConfig, QueryContext, RawResponse};

fn key_rng(seed: u64, ctx: &QueryContext) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(ctx.report_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(ctx.label_name.as_bytes());
    hasher.update([0x1f]);
    hasher.update(ctx.template_id.to_le_bytes());
    hasher.update(ctx.attempt.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes))
}

fn truth_key(report_id: &str, label_name: &str) -> String {
    format!("{report_id}\u{1f}{label_name}")
}

/// Mock extraction backend with controllable per-template accuracy. Needs the
/// ground truth to decide whether a given (report, label, template) answer
/// comes out right.
pub struct MockBackend {
    config: BackendConfig,
    seed: u64,
    template_accuracy: Vec<f64>,
    truth: BTreeMap<String, bool>,
    /// Fraction of responses wrapped in prose (exercises the recovery path).
    pub recovered_rate: f64,
    /// Fraction of responses that are unparseable refusals.
    pub failure_rate: f64,
}

const YES_EXPLANATIONS: [&str; 3] = [
    "The report explicitly mentions findings consistent with {label}.",
    "The report describes an appearance suggestive of {label}.",
    "Findings in the report indicate {label}.",
];

const NO_EXPLANATIONS: [&str; 3] = [
    "The report does not mention {label}.",
    "No findings related to {label} are described in the report.",
    "The report appears unremarkable with respect to {label}.",
];

impl MockBackend {
    pub fn new(seed: u64, template_accuracy: Vec<f64>, truth: BTreeMap<String, bool>) -> Self {
        MockBackend {
            config: BackendConfig {
                base_url: "mock://extraction".into(),
                model_name: "mock-extractor".into(),
                ..BackendConfig::default()
            },
            seed,
            template_accuracy,
            truth,
            recovered_rate: 0.05,
            failure_rate: 0.01,
        }
    }

    /// Truth map from a binarized dataset, restricted to `labels`.
    pub fn truth_from_dataset(
        dataset: &crate::corpus::BinaryDataset,
        labels: &[String],
    ) -> BTreeMap<String, bool> {
        let mut truth = BTreeMap::new();
        for report in &dataset.reports {
            for label in labels {
                if let Some(&positive) = report.labels.get(label) {
                    truth.insert(truth_key(&report.report_id, label), positive);
                }
            }
        }
        truth
    }

    fn accuracy_for(&self, template_id: u32) -> f64 {
        // template ids are 1-based; unknown templates get a middling default
        self.template_accuracy
            .get((template_id.max(1) - 1) as usize)
            .copied()
            .unwrap_or(0.75)
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, _prompt: &str, ctx: &QueryContext) -> Result<RawResponse> {
        let mut rng = key_rng(self.seed, ctx);
        // fixed draw order keeps responses key-deterministic
        let failure_roll: f64 = rng.gen();
        let correct_roll: f64 = rng.gen();
        // confident answers: unanimous ensembles land below the 0.5 entropy
        // threshold, disagreeing ones above it
        let confidence: f64 = 0.85 + 0.14 * rng.gen::<f64>();
        let phrase_idx: usize = rng.gen_range(0..3);

        if failure_roll < self.failure_rate {
            return Ok(RawResponse {
                content: "I cannot determine the answer from this report.".into(),
                answer_logprobs: None,
            });
        }
        let truth = self
            .truth
            .get(&truth_key(&ctx.report_id, &ctx.label_name))
            .copied()
            .unwrap_or(false);
        let correct = correct_roll < self.accuracy_for(ctx.template_id);
        let answer_yes = truth == correct;
        let p_yes = if answer_yes { confidence } else { 1.0 - confidence };
        let template = if answer_yes {
            YES_EXPLANATIONS[phrase_idx]
        } else {
            NO_EXPLANATIONS[phrase_idx]
        };
        let explanation = template.replace("{label}", &ctx.label_name);
        let body = serde_json::json!({
            "Answer": if answer_yes { "Yes" } else { "No" },
            "Explanation": explanation,
        })
        .to_string();
        let content = if failure_roll < self.failure_rate + self.recovered_rate {
            format!("Sure! Here is my assessment: {body} Let me know if you need more detail.")
        } else {
            body
        };
        Ok(RawResponse {
            content,
            answer_logprobs: Some((p_yes.ln(), (1.0 - p_yes).ln())),
        })
    }
}

/// Mock judge: derives its verdict from the agreement of the enumerated
/// answers in the prompt. With n usable answers and majority size k:
/// k = n, or k = n−1 when n ≥ 4 → Definitely; k = n−2 when n ≥ 6 → usually
/// Definitely (a stable hash of the prompt stands in for weighing explanation
/// consistency); any other k > n/2 → Likely; tie → Uncertain.
pub struct MockJudgeBackend {
    config: BackendConfig,
}

/// Deterministic pseudo-draw in [0,1) from the prompt text.
fn prompt_draw(prompt: &str) -> f64 {
    let digest = Sha256::digest(prompt.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) as f64 / (u64::MAX as f64 + 1.0)
}

impl MockJudgeBackend {
    pub fn new() -> Self {
        MockJudgeBackend {
            config: BackendConfig {
                base_url: "mock://judge".into(),
                model_name: "mock-judge".into(),
                ..BackendConfig::default()
            },
        }
    }
}

impl Default for MockJudgeBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for MockJudgeBackend {
    fn id(&self) -> &str {
        "mock-judge"
    }

    fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str, _ctx: &QueryContext) -> Result<RawResponse> {
        let yes = prompt.matches("Answer: Yes").count();
        let no = prompt.matches("Answer: No").count();
        let n = yes + no;
        let (k, majority_yes) = if yes >= no { (yes, true) } else { (no, false) };
        let strong = k == n
            || (n >= 4 && k == n - 1)
            || (n >= 6 && k == n - 2 && prompt_draw(prompt) < 0.7);
        let decision = if n == 0 || 2 * k == n {
            "Uncertain".to_string()
        } else if strong {
            format!("Definitely {}", if majority_yes { "Yes" } else { "No" })
        } else {
            format!("Likely {}", if majority_yes { "Yes" } else { "No" })
        };
        let body = serde_json::json!({
            "Decision": decision,
            "Explanation": format!("{k} of {n} answers agree; explanations are consistent."),
        })
        .to_string();
        Ok(RawResponse {
            content: body,
            answer_logprobs: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::parse_answer_json;

    fn ctx(report: &str, label: &str, template: u32) -> QueryContext {
        QueryContext {
            report_id: report.into(),
            label_name: label.into(),
            template_id: template,
            attempt: 0,
        }
    }

    #[test]
    fn mock_is_deterministic_per_key() {
        let truth = BTreeMap::from([(truth_key("r1", "L"), true)]);
        let backend = MockBackend::new(7, vec![0.9; 6], truth);
        let a = backend.attempt("p", &ctx("r1", "L", 1)).unwrap();
        let b = backend.attempt("different prompt", &ctx("r1", "L", 1)).unwrap();
        assert_eq!(a.content, b.content);
        assert_eq!(a.answer_logprobs, b.answer_logprobs);
        // a different template draws a different confidence
        let c = backend.attempt("p", &ctx("r1", "L", 2)).unwrap();
        assert_ne!(a.answer_logprobs, c.answer_logprobs);
    }

    #[test]
    fn mock_emits_schema_valid_json() {
        let truth = BTreeMap::from([(truth_key("r1", "L"), true)]);
        let mut backend = MockBackend::new(7, vec![1.0; 6], truth);
        backend.failure_rate = 0.0;
        for t in 1..=6 {
            let raw = backend.attempt("p", &ctx("r1", "L", t)).unwrap();
            let (answer, _, _) = parse_answer_json(&raw.content).unwrap();
            // accuracy 1.0 and truth positive: always Yes
            assert_eq!(answer, crate::gateway::Answer::Yes);
            let (ly, ln) = raw.answer_logprobs.unwrap();
            assert!(ly > ln);
        }
    }

    #[test]
    fn mock_accuracy_flips_answers() {
        let truth = BTreeMap::from([(truth_key("r1", "L"), true)]);
        let mut backend = MockBackend::new(7, vec![0.0; 6], truth);
        backend.failure_rate = 0.0;
        backend.recovered_rate = 0.0;
        let raw = backend.attempt("p", &ctx("r1", "L", 1)).unwrap();
        let (answer, _, _) = parse_answer_json(&raw.content).unwrap();
        assert_eq!(answer, crate::gateway::Answer::No);
    }

    #[test]
    fn judge_verdict_rules() {
        let judge = MockJudgeBackend::new();
        let prompt = |yes: usize, no: usize| {
            let mut p = String::new();
            for _ in 0..yes {
                p.push_str("1. Answer: Yes\n");
            }
            for _ in 0..no {
                p.push_str("2. Answer: No\n");
            }
            p
        };
        let verdict = |yes, no| {
            let raw = judge.attempt(&prompt(yes, no), &ctx("r", "l", 0)).unwrap();
            let v: serde_json::Value = serde_json::from_str(&raw.content).unwrap();
            v["Decision"].as_str().unwrap().to_string()
        };
        assert_eq!(verdict(6, 0), "Definitely Yes");
        assert_eq!(verdict(5, 1), "Definitely Yes");
        assert_eq!(verdict(1, 5), "Definitely No");
        // a 4-2 split gives Definitely or Likely depending on the prompt hash
        assert!(verdict(4, 2).ends_with("Yes"));
        assert!(verdict(2, 4).ends_with("No"));
        assert_eq!(verdict(3, 3), "Uncertain");
        // small ensembles never get a Definitely from a split
        assert_eq!(verdict(2, 1), "Likely Yes");
    }

    #[test]
    fn judge_split_verdicts_vary_with_prompt() {
        let judge = MockJudgeBackend::new();
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..64 {
            let mut p = format!("Report snippet {i}\n");
            for _ in 0..4 {
                p.push_str("1. Answer: Yes\n");
            }
            p.push_str("2. Answer: No\n2. Answer: No\n");
            let raw = judge.attempt(&p, &ctx("r", "l", 0)).unwrap();
            let v: serde_json::Value = serde_json::from_str(&raw.content).unwrap();
            seen.insert(v["Decision"].as_str().unwrap().to_string());
            // same prompt, same verdict
            let again = judge.attempt(&p, &ctx("r", "l", 0)).unwrap();
            assert_eq!(raw.content, again.content);
        }
        assert!(seen.contains("Definitely Yes"));
        assert!(seen.contains("Likely Yes"));
    }
}
