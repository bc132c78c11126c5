//! Prompt-weight learning: per-label linear optimization of the
//! entropy-regularized validation objective, and a small MLP that predicts
//! case-dynamic weights.

use serde::{Deserialize, Serialize};

use crate::aggregator::WeightVector;
use crate::error::{Error, Result};

pub mod mlp;

pub use mlp::{
    build_case_features, mlp_backward, mlp_forward, mlp_loss, train_mlp, FeatureLayout, MlpModel,
    MlpTrainConfig, TrainCase,
};

/// Probability floor for per-case log-likelihoods in the linear objective.
pub const LINEAR_LOGLIK_EPS: f64 = 1e-6;

/// Softmax with max-subtraction for overflow safety.
pub fn softmax(w_raw: &[f64]) -> Vec<f64> {
    let m = w_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = w_raw.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Shannon entropy in nats, with 0·log 0 = 0.
pub fn entropy_nat(w: &[f64]) -> f64 {
    w.iter()
        .map(|&wi| if wi <= 0.0 { 0.0 } else { -wi * wi.ln() })
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearOptConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// Entropy regularization coefficient τ; 1 reproduces the written objective.
    pub tau: f64,
    pub seed: u64,
}

impl Default for LinearOptConfig {
    fn default() -> Self {
        LinearOptConfig {
            learning_rate: 0.5,
            max_iters: 20_000,
            convergence_tol: 1e-10,
            tau: 1.0,
            seed: 0,
        }
    }
}

/// One tuning case: per-prompt yes-probabilities (parse-failure fallback 0.5)
/// and the ground-truth answer.
#[derive(Debug, Clone)]
pub struct LinearCase {
    pub p_yes: Vec<f64>,
    pub truth: bool,
}

/// Mean over cases of log P(y*|a_i, x) per prompt, with probabilities clamped
/// at `LINEAR_LOGLIK_EPS`.
pub fn mean_log_likelihood(cases: &[LinearCase]) -> Result<Vec<f64>> {
    if cases.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let n_prompts = cases[0].p_yes.len();
    let mut sums = vec![0.0; n_prompts];
    for case in cases {
        if case.p_yes.len() != n_prompts {
            return Err(Error::ShapeMismatch(format!(
                "case has {} prompt probabilities, expected {n_prompts}",
                case.p_yes.len()
            )));
        }
        for (i, &p) in case.p_yes.iter().enumerate() {
            let p_correct = if case.truth { p } else { 1.0 - p };
            sums[i] += p_correct.max(LINEAR_LOGLIK_EPS).ln();
        }
    }
    let n = cases.len() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// L(w) = Σ_i w_i · mean_loglik_i + τ · H(w), natural log. The data term plus
/// the entropy regularizer discouraging overconfidence in a single prompt.
pub fn linear_objective(weights: &[f64], mean_loglik: &[f64], tau: f64) -> f64 {
    let data: f64 = weights.iter().zip(mean_loglik).map(|(w, l)| w * l).sum();
    data + tau * entropy_nat(weights)
}

fn objective_grad_raw(w: &[f64], mean_loglik: &[f64], tau: f64) -> Vec<f64> {
    // dL/dw_i, then through the softmax Jacobian
    let d: Vec<f64> = w
        .iter()
        .zip(mean_loglik)
        .map(|(&wi, &li)| {
            let ent = if wi <= 0.0 { 0.0 } else { wi.ln() + 1.0 };
            li - tau * ent
        })
        .collect();
    let mean_d: f64 = w.iter().zip(&d).map(|(wi, di)| wi * di).sum();
    w.iter().zip(&d).map(|(wi, di)| wi * (di - mean_d)).collect()
}

/// Maximize the objective over the simplex by gradient ascent on the raw
/// weights through softmax, initialized at uniform, keeping the best iterate.
pub fn optimize_linear_weights(cases: &[LinearCase], config: &LinearOptConfig) -> Result<WeightVector> {
    let mean_loglik = mean_log_likelihood(cases)?;
    optimize_linear_weights_from_loglik(&mean_loglik, config)
}

/// Same optimizer, starting from precomputed per-prompt mean log-likelihoods.
pub fn optimize_linear_weights_from_loglik(
    mean_loglik: &[f64],
    config: &LinearOptConfig,
) -> Result<WeightVector> {
    let n = mean_loglik.len();
    if n == 0 {
        return Err(Error::EmptyValidationSet);
    }
    let mut w_raw = vec![0.0; n];
    let mut best_w = softmax(&w_raw);
    let mut best_obj = linear_objective(&best_w, mean_loglik, config.tau);
    for _ in 0..config.max_iters {
        let w = softmax(&w_raw);
        let grad = objective_grad_raw(&w, mean_loglik, config.tau);
        let grad_norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        for (raw, g) in w_raw.iter_mut().zip(&grad) {
            *raw += config.learning_rate * g;
        }
        let w_next = softmax(&w_raw);
        let obj = linear_objective(&w_next, mean_loglik, config.tau);
        if obj > best_obj {
            best_obj = obj;
            best_w = w_next;
        }
        if grad_norm < config.convergence_tol {
            break;
        }
    }
    WeightVector::new(best_w)
}
