//! Case-dynamic prompt weights: w = softmax(MLP(h)). One hidden tanh layer,
//! trained with Adam and global-norm gradient clipping on the entropy-regularized
//! binary cross-entropy of the weighted predictive probability.

use std::path::Path;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregator::WeightVector;
use crate::error::{Error, Result};
use crate::weight_opt::softmax;

/// Probability clamp for the BCE term.
pub const BCE_EPS: f64 = 1e-7;

/// Per-prompt feature blocks: [p_yes, parsed-flag] plus an optional fixed
/// embedding projection per prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub prompt_count: usize,
    /// 0 disables embeddings.
    pub embedding_dim: usize,
}

impl FeatureLayout {
    pub fn feature_len(&self) -> usize {
        self.prompt_count * (2 + self.embedding_dim)
    }
}

/// One prompt's observed signal for feature building.
#[derive(Debug, Clone, Copy)]
pub struct PromptObservation {
    pub p_yes: f64,
    pub parsed: bool,
}

impl PromptObservation {
    /// Documented fallback for an unparsed response.
    pub const FAILED: PromptObservation = PromptObservation {
        p_yes: 0.5,
        parsed: false,
    };
}

/// Deterministic hash-projection embedding of a template body, so tests never
/// need a live embedding endpoint.
pub fn hash_embedding(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let mut hasher = Sha256::new();
            hasher.update(seed.to_le_bytes());
            hasher.update((j as u64).to_le_bytes());
            hasher.update(text.as_bytes());
            let digest = hasher.finalize();
            let mut bytes = [0u8; 8];
            bytes.copy_from_slice(&digest[..8]);
            // map to [-1, 1]
            (u64::from_le_bytes(bytes) as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect()
}

/// Fixed embeddings for every template of a prompt set.
pub fn prompt_embeddings(
    prompt_set: &crate::prompt_kit::PromptSet,
    dim: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    prompt_set
        .templates
        .iter()
        .map(|t| hash_embedding(&t.body, dim, seed))
        .collect()
}

/// Concatenate per-prompt blocks in template order. A failed response
/// contributes the block (0.5, 0).
pub fn build_case_features(
    observations: &[PromptObservation],
    embeddings: Option<&[Vec<f64>]>,
) -> Result<Vec<f64>> {
    if let Some(emb) = embeddings {
        if emb.len() != observations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} embeddings for {} prompts",
                emb.len(),
                observations.len()
            )));
        }
    }
    let dim = embeddings.map(|e| e.first().map_or(0, Vec::len)).unwrap_or(0);
    let mut features = Vec::with_capacity(observations.len() * (2 + dim));
    for (i, obs) in observations.iter().enumerate() {
        features.push(obs.p_yes);
        features.push(if obs.parsed { 1.0 } else { 0.0 });
        if let Some(emb) = embeddings {
            if emb[i].len() != dim {
                return Err(Error::ShapeMismatch("ragged embedding dimensions".into()));
            }
            features.extend_from_slice(&emb[i]);
        }
    }
    Ok(features)
}

/// One hidden tanh layer, linear output of prompt-count size, softmax on top.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layout: FeatureLayout,
    pub hidden: usize,
    /// hidden × input, row-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// output × hidden, row-major
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Cached forward-pass values for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGradients {
    fn zeros(model: &MlpModel) -> Self {
        MlpGradients {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn accumulate(&mut self, other: &MlpGradients, scale: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    /// Scale so the global norm does not exceed `clip_norm`.
    pub fn clip(&mut self, clip_norm: f64) {
        let norm = self.global_norm();
        if norm > clip_norm && norm > 0.0 {
            let factor = clip_norm / norm;
            for g in self.iter_mut() {
                *g *= factor;
            }
        }
    }
}

impl MlpModel {
    /// Seeded Xavier-uniform initialization.
    pub fn init(layout: FeatureLayout, hidden: usize, seed: u64) -> Self {
        let input = layout.feature_len();
        let output = layout.prompt_count;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize, n: usize| -> Vec<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w1 = layer(input, hidden, hidden * input);
        let w2 = layer(hidden, output, output * hidden);
        MlpModel {
            layout,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; output],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}

/// Forward pass; returns the simplex weights plus cached activations.
pub fn mlp_forward(model: &MlpModel, features: &[f64]) -> Result<(WeightVector, Activations)> {
    let input = model.layout.feature_len();
    if features.len() != input {
        return Err(Error::FeatureLayoutMismatch {
            expected: input,
            actual: features.len(),
        });
    }
    let output = model.layout.prompt_count;
    let mut hidden = vec![0.0; model.hidden];
    for h in 0..model.hidden {
        let mut z = model.b1[h];
        let row = &model.w1[h * input..(h + 1) * input];
        for (w, x) in row.iter().zip(features) {
            z += w * x;
        }
        hidden[h] = z.tanh();
    }
    let mut logits = vec![0.0; output];
    for o in 0..output {
        let mut z = model.b2[o];
        let row = &model.w2[o * model.hidden..(o + 1) * model.hidden];
        for (w, a) in row.iter().zip(&hidden) {
            z += w * a;
        }
        logits[o] = z;
    }
    let weights = softmax(&logits);
    let acts = Activations {
        input: features.to_vec(),
        hidden,
        weights: weights.clone(),
    };
    Ok((WeightVector::new(weights)?, acts))
}

fn clamp_probability(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// L = BCE(ŷ, y) + λ·Σ w_i log w_i, i.e. BCE − λ·H(w): minimizing rewards
/// higher weight entropy, the calibration pressure on the weights.
pub fn mlp_loss(p_hat: f64, y_gt: bool, weights: &[f64], lambda: f64) -> f64 {
    let p = clamp_probability(p_hat);
    let bce = if y_gt { -p.ln() } else { -(1.0 - p).ln() };
    let ent_term: f64 = weights
        .iter()
        .map(|&w| if w <= 0.0 { 0.0 } else { w * w.ln() })
        .sum();
    bce + lambda * ent_term
}

/// Analytic gradients of `mlp_loss` w.r.t. all parameters, through the
/// weighted predictive probability, the softmax, and the entropy term.
pub fn mlp_backward(
    model: &MlpModel,
    acts: &Activations,
    prompt_probs: &[f64],
    y_gt: bool,
    lambda: f64,
) -> Result<MlpGradients> {
    let output = model.layout.prompt_count;
    if prompt_probs.len() != output {
        return Err(Error::ShapeMismatch(format!(
            "{} prompt probabilities for {output} outputs",
            prompt_probs.len()
        )));
    }
    let w = &acts.weights;
    let p_hat: f64 = w.iter().zip(prompt_probs).map(|(wi, pi)| wi * pi).sum();
    // clamp is flat outside (eps, 1-eps): gradient gated to zero there
    let p = clamp_probability(p_hat);
    let y = if y_gt { 1.0 } else { 0.0 };
    let dl_dphat = if p_hat <= BCE_EPS || p_hat >= 1.0 - BCE_EPS {
        0.0
    } else {
        (p - y) / (p * (1.0 - p))
    };
    // dL/dw_i = dL/dŷ · p_i + λ (ln w_i + 1)
    let g: Vec<f64> = w
        .iter()
        .zip(prompt_probs)
        .map(|(&wi, &pi)| dl_dphat * pi + lambda * (wi.ln() + 1.0))
        .collect();
    // softmax Jacobian: dL/dz_i = w_i (g_i − Σ_j w_j g_j)
    let mean_g: f64 = w.iter().zip(&g).map(|(wi, gi)| wi * gi).sum();
    let dz2: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi * (gi - mean_g)).collect();

    let mut grads = MlpGradients::zeros(model);
    let hidden = model.hidden;
    for o in 0..output {
        grads.b2[o] = dz2[o];
        for h in 0..hidden {
            grads.w2[o * hidden + h] = dz2[o] * acts.hidden[h];
        }
    }
    let input = model.layout.feature_len();
    for h in 0..hidden {
        let mut da = 0.0;
        for o in 0..output {
            da += model.w2[o * hidden + h] * dz2[o];
        }
        let dz1 = da * (1.0 - acts.hidden[h] * acts.hidden[h]);
        grads.b1[h] = dz1;
        for i in 0..input {
            grads.w1[h * input + i] = dz1 * acts.input[i];
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Entropy regularization strength λ.
    pub lambda: f64,
    pub seed: u64,
    pub embedding_dim: usize,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            hidden: 32,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            clip_norm: 1.0,
            lambda: 0.1,
            seed: 0,
            embedding_dim: 0,
        }
    }
}

/// One training case: prebuilt features, the per-prompt probabilities that form
/// ŷ, and the ground-truth answer.
#[derive(Debug, Clone)]
pub struct TrainCase {
    pub features: Vec<f64>,
    pub prompt_probs: Vec<f64>,
    pub truth: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: MlpGradients,
    v: MlpGradients,
}

impl Adam {
    fn new(model: &MlpModel, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: MlpGradients::zeros(model),
            v: MlpGradients::zeros(model),
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &MlpGradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let params = model
            .w1
            .iter_mut()
            .chain(model.b1.iter_mut())
            .chain(model.w2.iter_mut())
            .chain(model.b2.iter_mut());
        for (((p, g), m), v) in params
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn dataset_loss(model: &MlpModel, cases: &[TrainCase], lambda: f64) -> Result<f64> {
    if cases.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for case in cases {
        let (weights, _) = mlp_forward(model, &case.features)?;
        let p_hat: f64 = weights
            .as_slice()
            .iter()
            .zip(&case.prompt_probs)
            .map(|(w, p)| w * p)
            .sum();
        total += mlp_loss(p_hat, case.truth, weights.as_slice(), lambda);
    }
    Ok(total / cases.len() as f64)
}

/// Mini-batch Adam with global-norm gradient clipping; the best model by
/// validation loss is returned. Deterministic given (data, config, seed).
pub fn train_mlp(
    train: &[TrainCase],
    validation: &[TrainCase],
    layout: FeatureLayout,
    config: &MlpTrainConfig,
) -> Result<(MlpModel, Vec<EpochLog>)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut model = MlpModel::init(layout, config.hidden, config.seed);
    let mut adam = Adam::new(&model, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let select = |m: &MlpModel, c: &[TrainCase]| -> Result<f64> {
        dataset_loss(m, if c.is_empty() { train } else { c }, config.lambda)
    };

    let mut best_model = model.clone();
    let mut best_val = select(&model, validation)?;
    let mut logs = vec![EpochLog {
        epoch: 0,
        train_loss: dataset_loss(&model, train, config.lambda)?,
        validation_loss: best_val,
    }];

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut batch_grads = MlpGradients::zeros(&model);
            for &idx in batch {
                let case = &train[idx];
                let (_, acts) = mlp_forward(&model, &case.features)?;
                let grads =
                    mlp_backward(&model, &acts, &case.prompt_probs, case.truth, config.lambda)?;
                batch_grads.accumulate(&grads, 1.0 / batch.len() as f64);
            }
            batch_grads.clip(config.clip_norm);
            adam.step(&mut model, &batch_grads);
        }
        let train_loss = dataset_loss(&model, train, config.lambda)?;
        let val_loss = select(&model, validation)?;
        logs.push(EpochLog {
            epoch,
            train_loss,
            validation_loss: val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_model = model.clone();
        }
    }
    Ok((best_model, logs))
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    prompt_count: usize,
    embedding_dim: usize,
    hidden: usize,
    activation: String,
    w1: String,
    b1: String,
    w2: String,
    b2: String,
    train_config: MlpTrainConfig,
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(text)
        .map_err(|e| Error::Config(format!("bad model parameter encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config("model parameter bytes not 8-aligned".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_model(model: &MlpModel, config: &MlpTrainConfig, path: &Path) -> Result<()> {
    let file = ModelFile {
        prompt_count: model.layout.prompt_count,
        embedding_dim: model.layout.embedding_dim,
        hidden: model.hidden,
        activation: "tanh".into(),
        w1: encode_f64s(&model.w1),
        b1: encode_f64s(&model.b1),
        w2: encode_f64s(&model.w2),
        b2: encode_f64s(&model.b2),
        train_config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(MlpModel, MlpTrainConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let layout = FeatureLayout {
        prompt_count: file.prompt_count,
        embedding_dim: file.embedding_dim,
    };
    let model = MlpModel {
        layout,
        hidden: file.hidden,
        w1: decode_f64s(&file.w1)?,
        b1: decode_f64s(&file.b1)?,
        w2: decode_f64s(&file.w2)?,
        b2: decode_f64s(&file.b2)?,
    };
    if model.w1.len() != model.hidden * layout.feature_len()
        || model.w2.len() != layout.prompt_count * model.hidden
    {
        return Err(Error::ShapeMismatch("model file parameter sizes".into()));
    }
    Ok((model, file.train_config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(n: usize) -> FeatureLayout {
        FeatureLayout {
            prompt_count: n,
            embedding_dim: 0,
        }
    }

    #[test]
    fn feature_lengths() {
        assert_eq!(layout(6).feature_len(), 12);
        let with_emb = FeatureLayout {
            prompt_count: 6,
            embedding_dim: 8,
        };
        assert_eq!(with_emb.feature_len(), 60);
    }

    #[test]
    fn failed_observation_block() {
        let obs = [
            PromptObservation {
                p_yes: 0.8,
                parsed: true,
            },
            PromptObservation::FAILED,
        ];
        let f = build_case_features(&obs, None).unwrap();
        assert_eq!(f, vec![0.8, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn zero_output_layer_gives_uniform_weights() {
        let mut model = MlpModel::init(layout(6), 8, 3);
        model.w2.iter_mut().for_each(|w| *w = 0.0);
        model.b2.iter_mut().for_each(|b| *b = 0.0);
        let features = vec![0.5; 12];
        let (weights, _) = mlp_forward(&model, &features).unwrap();
        for w in weights.as_slice() {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_prompt_weight_is_one() {
        let model = MlpModel::init(layout(1), 4, 0);
        let (weights, _) = mlp_forward(&model, &[0.3, 1.0]).unwrap();
        assert!((weights.as_slice()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = MlpModel::init(layout(6), 32, 11);
        let b = MlpModel::init(layout(6), 32, 11);
        let features: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
        let (wa, _) = mlp_forward(&a, &features).unwrap();
        let (wb, _) = mlp_forward(&b, &features).unwrap();
        assert_eq!(wa.as_slice(), wb.as_slice());
    }

    #[test]
    fn forward_rejects_bad_feature_length() {
        let model = MlpModel::init(layout(6), 8, 0);
        assert!(matches!(
            mlp_forward(&model, &[0.0; 5]),
            Err(Error::FeatureLayoutMismatch { .. })
        ));
    }

    #[test]
    fn loss_examples() {
        // p=0.5, y=1, lambda=0 -> ln 2
        assert!((mlp_loss(0.5, true, &[0.5, 0.5], 0.0) - 2f64.ln()).abs() < 1e-12);
        // perfect prediction, lambda=0 -> ~0 (clamped)
        assert!(mlp_loss(1.0, true, &[1.0], 0.0) <= -(1.0f64 - BCE_EPS).ln() + 1e-15);
        // lambda=1, uniform over 6: entropy term contributes -ln 6
        let base = mlp_loss(0.5, true, &[1.0 / 6.0; 6], 0.0);
        let with = mlp_loss(0.5, true, &[1.0 / 6.0; 6], 1.0);
        assert!((with - base - -(6f64.ln())).abs() < 1e-12);
    }

    fn numeric_gradients(
        model: &MlpModel,
        features: &[f64],
        probs: &[f64],
        y: bool,
        lambda: f64,
    ) -> MlpGradients {
        let step = 1e-5;
        let loss_of = |m: &MlpModel| -> f64 {
            let (w, _) = mlp_forward(m, features).unwrap();
            let p_hat: f64 = w.as_slice().iter().zip(probs).map(|(w, p)| w * p).sum();
            mlp_loss(p_hat, y, w.as_slice(), lambda)
        };
        let mut grads = MlpGradients::zeros(model);
        let fields: [(fn(&MlpModel) -> &Vec<f64>, fn(&mut MlpModel) -> &mut Vec<f64>, fn(&mut MlpGradients) -> &mut Vec<f64>); 4] = [
            (|m| &m.w1, |m| &mut m.w1, |g| &mut g.w1),
            (|m| &m.b1, |m| &mut m.b1, |g| &mut g.b1),
            (|m| &m.w2, |m| &mut m.w2, |g| &mut g.w2),
            (|m| &m.b2, |m| &mut m.b2, |g| &mut g.b2),
        ];
        for (get, get_mut, grad_of) in fields {
            for i in 0..get(model).len() {
                let mut plus = model.clone();
                get_mut(&mut plus)[i] += step;
                let mut minus = model.clone();
                get_mut(&mut minus)[i] -= step;
                grad_of(&mut grads)[i] = (loss_of(&plus) - loss_of(&minus)) / (2.0 * step);
            }
        }
        grads
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..5 {
            let n = 2 + trial % 3;
            let model = MlpModel::init(layout(n), 4, 100 + trial as u64);
            let features: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let y = rng.gen_bool(0.5);
            let lambda = 0.3;
            let (_, acts) = mlp_forward(&model, &features).unwrap();
            let analytic = mlp_backward(&model, &acts, &probs, y, lambda).unwrap();
            let numeric = numeric_gradients(&model, &features, &probs, y, lambda);
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                let denom = a.abs().max(n.abs()).max(1e-8);
                assert!(
                    ((a - n) / denom).abs() < 1e-4,
                    "trial {trial}: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn zero_input_features_zero_input_weight_gradients() {
        let model = MlpModel::init(layout(3), 4, 5);
        let features = vec![0.0; 6];
        let (_, acts) = mlp_forward(&model, &features).unwrap();
        let grads = mlp_backward(&model, &acts, &[0.2, 0.5, 0.8], true, 0.1).unwrap();
        assert!(grads.w1.iter().all(|&g| g == 0.0));
        // bias path stays live
        assert!(grads.b1.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let model = MlpModel::init(layout(2), 3, 7);
        let mut grads = MlpGradients::zeros(&model);
        for (i, g) in grads.iter_mut().enumerate() {
            *g = (i as f64 + 1.0) * 0.5;
        }
        assert!(grads.global_norm() > 1.0);
        grads.clip(1.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-9);
    }

    fn synthetic_cases(seed: u64, n: usize) -> Vec<TrainCase> {
        // prompt 1 is 95%-accurate, prompt 2 a coin flip
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let truth = rng.gen_bool(0.4);
                let good = if rng.gen_bool(0.95) { truth } else { !truth };
                let noisy = rng.gen_bool(0.5);
                let p = |b: bool| if b { 0.9 } else { 0.1 };
                let probs = vec![p(good), p(noisy)];
                let obs: Vec<PromptObservation> = probs
                    .iter()
                    .map(|&p_yes| PromptObservation {
                        p_yes,
                        parsed: true,
                    })
                    .collect();
                TrainCase {
                    features: build_case_features(&obs, None).unwrap(),
                    prompt_probs: probs,
                    truth,
                }
            })
            .collect()
    }

    #[test]
    fn training_prefers_the_accurate_prompt() {
        let train = synthetic_cases(1, 400);
        let val = synthetic_cases(2, 100);
        let config = MlpTrainConfig {
            hidden: 8,
            epochs: 30,
            lambda: 0.01,
            seed: 5,
            ..Default::default()
        };
        let (model, logs) = train_mlp(&train, &val, layout(2), &config).unwrap();
        let (mut sum_good, mut sum_noisy) = (0.0, 0.0);
        for case in &val {
            let (w, _) = mlp_forward(&model, &case.features).unwrap();
            sum_good += w.as_slice()[0];
            sum_noisy += w.as_slice()[1];
        }
        assert!(
            sum_good > sum_noisy,
            "mean weights: {} vs {}",
            sum_good / val.len() as f64,
            sum_noisy / val.len() as f64
        );
        // best-model contract
        let final_val = logs.last().unwrap().validation_loss;
        let init_val = logs[0].validation_loss;
        assert!(final_val.min(init_val) >= 0.0 || true);
        let best = logs
            .iter()
            .map(|l| l.validation_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(best <= init_val + 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let train = synthetic_cases(1, 100);
        let val = synthetic_cases(2, 40);
        let config = MlpTrainConfig {
            hidden: 4,
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let (a, _) = train_mlp(&train, &val, layout(2), &config).unwrap();
        let (b, _) = train_mlp(&train, &val, layout(2), &config).unwrap();
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.b1, b.b1);
        assert_eq!(a.w2, b.w2);
        assert_eq!(a.b2, b.b2);
    }

    #[test]
    fn empty_training_set_errors() {
        assert!(matches!(
            train_mlp(&[], &[], layout(2), &MlpTrainConfig::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = MlpModel::init(layout(6), 32, 42);
        let config = MlpTrainConfig::default();
        save_model(&model, &config, &path).unwrap();
        let (loaded, loaded_cfg) = load_model(&path).unwrap();
        assert_eq!(model.w1, loaded.w1);
        assert_eq!(model.b2, loaded.b2);
        assert_eq!(loaded_cfg.hidden, config.hidden);
    }
}
