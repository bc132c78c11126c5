//! Combine per-prompt yes-probabilities under a weight vector into a predictive
//! probability, a decision, and an entropy-based uncertainty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Answer, ParseStatus, PromptResponse};

pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex over the ensemble prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(WeightVector { weights })
    }

    /// Equal trust across all prompts: w_i = 1/n.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidWeights("prompt count must be >= 1".into()));
        }
        Ok(WeightVector {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Aggregation method tag carried through predictions and output tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Uniform,
    Linear,
    Mlp,
    Agent,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Baseline,
        Method::Uniform,
        Method::Linear,
        Method::Mlp,
        Method::Agent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Uniform => "uniform",
            Method::Linear => "linear",
            Method::Mlp => "mlp",
            Method::Agent => "agent",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Method::Baseline),
            "uniform" => Ok(Method::Uniform),
            "linear" => Ok(Method::Linear),
            "mlp" => Ok(Method::Mlp),
            "agent" => Ok(Method::Agent),
            other => Err(Error::Config(format!("unknown method: {other}"))),
        }
    }
}

/// How the scalar uncertainty is derived from the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMode {
    /// Entropy of the weighted predictive mixture H(Σ w_i p_i). Default.
    MixtureEntropy,
    /// Weighted average of per-prompt entropies Σ w_i H(p_i). Kept as a
    /// sensitivity-check alternative reading.
    MeanPromptEntropy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrailEntry {
    pub template_id: u32,
    pub p_yes: f64,
    pub weight: f64,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentTrail {
    pub category: String,
    pub explanation: String,
    /// True when the verdict could not be parsed and the case fell back to
    /// uniform entropy aggregation.
    pub fallback: bool,
}

/// Final decision + uncertainty with full provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub report_id: String,
    pub label_name: String,
    pub method: Method,
    pub p_hat: f64,
    pub decision: Answer,
    pub uncertainty: f64,
    pub trail: Vec<TrailEntry>,
    pub agent: Option<AgentTrail>,
    pub all_failed: bool,
}

/// Weighted average Σ w_i p_i over probabilities. Lengths must match.
pub fn posterior_predictive(weights: &[f64], p_yes: &[f64]) -> Result<f64> {
    if weights.len() != p_yes.len() {
        return Err(Error::LengthMismatch {
            predictions: p_yes.len(),
            truths: weights.len(),
        });
    }
    Ok(weights.iter().zip(p_yes).map(|(w, p)| w * p).sum())
}

/// Normalized binary entropy: −p log₂ p − (1−p) log₂ (1−p), with 0·log 0 = 0.
pub fn binary_entropy_uncertainty(p_hat: f64) -> f64 {
    // weighted sums can land an ulp outside [0,1]
    let p_hat = p_hat.clamp(0.0, 1.0);
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    (term(p_hat) + term(1.0 - p_hat)).min(1.0)
}

/// Yes iff p_hat > 0.5; a tie at exactly 0.5 decides No.
pub fn decide(p_hat: f64) -> Answer {
    if p_hat > 0.5 {
        Answer::Yes
    } else {
        Answer::No
    }
}

/// Weights renormalized over the parsed subset of responses. Returns None when
/// everything failed or the surviving mass is zero (then uniform over parsed).
fn renormalized_weights(weights: &[f64], responses: &[PromptResponse]) -> Option<Vec<f64>> {
    let parsed: Vec<usize> = responses
        .iter()
        .enumerate()
        .filter(|(_, r)| r.parse_status != ParseStatus::Failed)
        .map(|(i, _)| i)
        .collect();
    if parsed.is_empty() {
        return None;
    }
    let mass: f64 = parsed.iter().map(|&i| weights[i]).sum();
    let mut out = vec![0.0; weights.len()];
    if mass > 0.0 {
        for &i in &parsed {
            out[i] = weights[i] / mass;
        }
    } else {
        for &i in &parsed {
            out[i] = 1.0 / parsed.len() as f64;
        }
    }
    Some(out)
}

/// Compose posterior predictive, entropy uncertainty, and the decision rule.
/// Failed responses are excluded with weight renormalization; an all-failed
/// case gets uncertainty 1.0.
pub fn aggregate(
    method: Method,
    responses: &[PromptResponse],
    weights: &WeightVector,
    mode: UncertaintyMode,
) -> Result<EnsemblePrediction> {
    if responses.is_empty() {
        return Err(Error::NoParsedResponses);
    }
    if weights.len() != responses.len() {
        return Err(Error::LengthMismatch {
            predictions: responses.len(),
            truths: weights.len(),
        });
    }
    let report_id = responses[0].report_id.clone();
    let label_name = responses[0].label_name.clone();

    let Some(effective) = renormalized_weights(weights.as_slice(), responses) else {
        return Ok(EnsemblePrediction {
            report_id,
            label_name,
            method,
            p_hat: 0.5,
            decision: Answer::No,
            uncertainty: 1.0,
            trail: responses
                .iter()
                .map(|r| TrailEntry {
                    template_id: r.template_id,
                    p_yes: r.p_yes,
                    weight: 0.0,
                    parse_status: r.parse_status,
                })
                .collect(),
            agent: None,
            all_failed: true,
        });
    };

    let p: Vec<f64> = responses.iter().map(|r| r.p_yes).collect();
    let p_hat = posterior_predictive(&effective, &p)?;
    let uncertainty = match mode {
        UncertaintyMode::MixtureEntropy => binary_entropy_uncertainty(p_hat),
        UncertaintyMode::MeanPromptEntropy => effective
            .iter()
            .zip(&p)
            .map(|(w, &pi)| w * binary_entropy_uncertainty(pi))
            .sum(),
    };
    Ok(EnsemblePrediction {
        report_id,
        label_name,
        method,
        p_hat,
        decision: decide(p_hat),
        uncertainty,
        trail: responses
            .iter()
            .zip(&effective)
            .map(|(r, &w)| TrailEntry {
                template_id: r.template_id,
                p_yes: r.p_yes,
                weight: w,
                parse_status: r.parse_status,
            })
            .collect(),
        agent: None,
        all_failed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn responses(ps: &[f64]) -> Vec<PromptResponse> {
        ps.iter()
            .enumerate()
            .map(|(i, &p)| PromptResponse {
                report_id: "r".into(),
                label_name: "l".into(),
                template_id: (i + 1) as u32,
                answer: Answer::from_bool(p > 0.5),
                p_yes: p,
                explanation: String::new(),
                parse_status: ParseStatus::Parsed,
                raw_text: String::new(),
            })
            .collect()
    }

    #[test]
    fn uniform_weights_values() {
        let w = WeightVector::uniform(6).unwrap();
        for &wi in w.as_slice() {
            assert!((wi - 1.0 / 6.0).abs() < 1e-15);
        }
        assert_eq!(WeightVector::uniform(1).unwrap().as_slice(), &[1.0]);
        let w3 = WeightVector::uniform(3).unwrap();
        assert!((w3.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(WeightVector::uniform(0).is_err());
    }

    #[test]
    fn posterior_predictive_examples() {
        assert!((posterior_predictive(&[0.5, 0.5], &[0.2, 0.8]).unwrap() - 0.5).abs() < 1e-15);
        assert!((posterior_predictive(&[1.0, 0.0], &[0.3, 0.9]).unwrap() - 0.3).abs() < 1e-15);
        let p = posterior_predictive(&[2.0 / 3.0, 1.0 / 3.0], &[0.9, 0.3]).unwrap();
        assert!((p - 0.7).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((binary_entropy_uncertainty(0.5) - 1.0).abs() < 1e-15);
        assert_eq!(binary_entropy_uncertainty(0.0), 0.0);
        assert_eq!(binary_entropy_uncertainty(1.0), 0.0);
        // H2(0.75) = 0.811278...
        assert!((binary_entropy_uncertainty(0.75) - 0.8112781244591328).abs() < 1e-12);
    }

    #[test]
    fn decision_rule() {
        assert_eq!(decide(0.6), Answer::Yes);
        assert_eq!(decide(0.4), Answer::No);
        // tie breaks to No
        assert_eq!(decide(0.5), Answer::No);
    }

    #[test]
    fn aggregate_unanimous_yes() {
        let r = responses(&[1.0; 6]);
        let w = WeightVector::uniform(6).unwrap();
        let pred = aggregate(Method::Uniform, &r, &w, UncertaintyMode::MixtureEntropy).unwrap();
        assert!((pred.p_hat - 1.0).abs() < 1e-12);
        assert_eq!(pred.decision, Answer::Yes);
        assert!(pred.uncertainty < 1e-10);
    }

    #[test]
    fn aggregate_split_hard_votes() {
        let r = responses(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let w = WeightVector::uniform(6).unwrap();
        let pred = aggregate(Method::Uniform, &r, &w, UncertaintyMode::MixtureEntropy).unwrap();
        assert!((pred.p_hat - 0.5).abs() < 1e-12);
        assert!((pred.uncertainty - 1.0).abs() < 1e-12);
        assert_eq!(pred.decision, Answer::No);
    }

    #[test]
    fn failed_responses_are_renormalized_away() {
        let mut r = responses(&[0.9, 0.9, 0.9, 0.9, 0.9, 0.123]);
        r[5].parse_status = ParseStatus::Failed;
        r[5].p_yes = 0.5;
        let w = WeightVector::uniform(6).unwrap();
        let pred = aggregate(Method::Uniform, &r, &w, UncertaintyMode::MixtureEntropy).unwrap();
        assert!((pred.p_hat - 0.9).abs() < 1e-12);
        assert_eq!(pred.trail[5].weight, 0.0);
    }

    #[test]
    fn all_failed_has_unit_uncertainty() {
        let mut r = responses(&[0.5, 0.5]);
        for resp in &mut r {
            resp.parse_status = ParseStatus::Failed;
        }
        let w = WeightVector::uniform(2).unwrap();
        let pred = aggregate(Method::Uniform, &r, &w, UncertaintyMode::MixtureEntropy).unwrap();
        assert!(pred.all_failed);
        assert_eq!(pred.uncertainty, 1.0);
        assert_eq!(pred.decision, Answer::No);
    }

    proptest! {
        #[test]
        fn entropy_symmetric_and_bounded(p in 0.0f64..=1.0) {
            let u = binary_entropy_uncertainty(p);
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!((u - binary_entropy_uncertainty(1.0 - p)).abs() < 1e-12);
        }

        #[test]
        fn posterior_bounded_by_min_max(ps in proptest::collection::vec(0.0f64..=1.0, 1..8)) {
            let n = ps.len();
            let w = WeightVector::uniform(n).unwrap();
            let p_hat = posterior_predictive(w.as_slice(), &ps).unwrap();
            let lo = ps.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(p_hat >= lo - 1e-12 && p_hat <= hi + 1e-12);
            // uniform weights equal the arithmetic mean
            let mean = ps.iter().sum::<f64>() / n as f64;
            prop_assert!((p_hat - mean).abs() < 1e-12);
        }
    }
}
