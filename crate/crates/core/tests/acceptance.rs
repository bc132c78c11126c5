//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use promptense::aggregator::{binary_entropy_uncertainty, posterior_predictive, Method, WeightVector};
use promptense::agent::{category_to_uncertainty, parse_verdict, ConfidenceCategory};
use promptense::config::RunConfig;
use promptense::evalkit::{self, ConfusionMatrix, EvalCase};
use promptense::gateway::Answer;
use promptense::pipeline::{cmd_evaluate, cmd_optimize, cmd_run, cmd_train_mlp, EvaluationOutputs};
use promptense::weight_opt::mlp::{mlp_backward, mlp_forward, mlp_loss, MlpGradients, MlpModel};
use promptense::weight_opt::{
    linear_objective, optimize_linear_weights_from_loglik, softmax, FeatureLayout, LinearOptConfig,
};

fn criterion(number: u32, description: &str, body: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(body);
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {number}: {verdict} - {description}");
    if let Err(panic) = outcome {
        resume_unwind(panic);
    }
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence

/// Independent oracle using algebraically different formulas: F1 from counts
/// directly, kappa in its 2×2 determinant form.
fn oracle(tp: u64, fp: u64, tn: u64, fn_: u64) -> (f64, f64, f64, f64, f64) {
    let (tpf, fpf, tnf, fnf) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let n = tpf + fpf + tnf + fnf;
    let accuracy = (tpf + tnf) / n;
    let precision = if tp + fp > 0 { tpf / (tpf + fpf) } else { 0.0 };
    let recall = if tp + fn_ > 0 { tpf / (tpf + fnf) } else { 0.0 };
    let f1 = if 2 * tp + fp + fn_ > 0 && tp > 0 {
        2.0 * tpf / (2.0 * tpf + fpf + fnf)
    } else {
        0.0
    };
    let kappa_denom = (tpf + fpf) * (fpf + tnf) + (tpf + fnf) * (fnf + tnf);
    let kappa = if kappa_denom > 0.0 {
        2.0 * (tpf * tnf - fnf * fpf) / kappa_denom
    } else {
        0.0
    };
    (accuracy, precision, recall, f1, kappa)
}

#[test]
fn acceptance_1_metric_oracle_equivalence() {
    criterion(1, "metrics match an independent oracle on 1,000 random confusion matrices", || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1_000 {
            let (tp, fp, tn, fn_) = loop {
                let draw: [u64; 4] = [
                    rng.gen_range(0..200),
                    rng.gen_range(0..200),
                    rng.gen_range(0..200),
                    rng.gen_range(0..200),
                ];
                if draw.iter().sum::<u64>() > 0 {
                    break (draw[0], draw[1], draw[2], draw[3]);
                }
            };
            let record = evalkit::metrics(&ConfusionMatrix { tp, fp, tn, fn_ }).unwrap();
            let (acc, prec, rec, f1, kappa) = oracle(tp, fp, tn, fn_);
            let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
            assert!(close(record.accuracy, acc), "accuracy {} vs {acc}", record.accuracy);
            assert!(close(record.precision, prec), "precision {} vs {prec}", record.precision);
            assert!(close(record.recall, rec), "recall {} vs {rec}", record.recall);
            assert!(close(record.f1, f1), "f1 {} vs {f1}", record.f1);
            assert!(close(record.kappa, kappa), "kappa {} vs {kappa}", record.kappa);
        }
        // fixed balanced case: kappa 0.6
        let record = evalkit::metrics(&ConfusionMatrix {
            tp: 40,
            fn_: 10,
            fp: 10,
            tn: 40,
        })
        .unwrap();
        assert!((record.kappa - 0.6).abs() < 1e-12, "kappa {}", record.kappa);
        assert!((record.accuracy - 0.8).abs() < 1e-12);
    });
}

// ---------------------------------------------------------------------------
// 2. Linear-optimizer closed form

#[test]
fn acceptance_2_linear_optimizer_closed_form() {
    criterion(2, "linear optimizer matches softmax closed form and a simplex grid search", || {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let config = LinearOptConfig::default();
        assert_eq!(config.tau, 1.0);
        for &n in &[2usize, 3, 6] {
            for _ in 0..20 {
                let loglik: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..-0.05)).collect();
                let w = optimize_linear_weights_from_loglik(&loglik, &config).unwrap();
                let expected = softmax(&loglik);
                let sup = w
                    .as_slice()
                    .iter()
                    .zip(&expected)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(sup < 1e-3, "n={n}: sup-norm {sup}");
            }
        }
        // N=3: beat an exhaustive 0.01-resolution grid over the simplex
        for _ in 0..5 {
            let loglik: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..-0.05)).collect();
            let w = optimize_linear_weights_from_loglik(&loglik, &config).unwrap();
            let opt_obj = linear_objective(w.as_slice(), &loglik, config.tau);
            let mut grid_best = f64::NEG_INFINITY;
            for i in 0..=100u32 {
                for j in 0..=(100 - i) {
                    let grid_w = [
                        i as f64 / 100.0,
                        j as f64 / 100.0,
                        (100 - i - j) as f64 / 100.0,
                    ];
                    grid_best = grid_best.max(linear_objective(&grid_w, &loglik, config.tau));
                }
            }
            assert!(
                (opt_obj - grid_best).abs() <= 2e-2 && opt_obj >= grid_best - 2e-2,
                "optimizer {opt_obj} vs grid {grid_best}"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 3. MLP gradient check

fn flat_params(model: &MlpModel) -> Vec<f64> {
    let mut flat = model.w1.clone();
    flat.extend(&model.b1);
    flat.extend(&model.w2);
    flat.extend(&model.b2);
    flat
}

fn set_flat_param(model: &mut MlpModel, idx: usize, value: f64) {
    let (n1, n2, n3) = (model.w1.len(), model.b1.len(), model.w2.len());
    if idx < n1 {
        model.w1[idx] = value;
    } else if idx < n1 + n2 {
        model.b1[idx - n1] = value;
    } else if idx < n1 + n2 + n3 {
        model.w2[idx - n1 - n2] = value;
    } else {
        model.b2[idx - n1 - n2 - n3] = value;
    }
}

fn flat_grads(grads: &MlpGradients) -> Vec<f64> {
    let mut flat = grads.w1.clone();
    flat.extend(&grads.b1);
    flat.extend(&grads.w2);
    flat.extend(&grads.b2);
    flat
}

fn case_loss(model: &MlpModel, features: &[f64], probs: &[f64], y: bool, lambda: f64) -> f64 {
    let (w, _) = mlp_forward(model, features).unwrap();
    let p_hat: f64 = w.as_slice().iter().zip(probs).map(|(wi, pi)| wi * pi).sum();
    mlp_loss(p_hat, y, w.as_slice(), lambda)
}

#[test]
fn acceptance_3_mlp_gradient_check() {
    criterion(3, "analytic MLP gradients match central finite differences", || {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let step = 1e-5;
        for trial in 0..20u64 {
            let prompts = 2 + (trial as usize) % 3;
            let embedding = if trial % 2 == 0 { 0 } else { 2 };
            let layout = FeatureLayout {
                prompt_count: prompts,
                embedding_dim: embedding,
            };
            let model = MlpModel::init(layout, 3 + (trial as usize) % 3, 300 + trial);
            let features: Vec<f64> = (0..layout.feature_len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let probs: Vec<f64> = (0..prompts).map(|_| rng.gen_range(0.05..0.95)).collect();
            let y = rng.gen_bool(0.5);
            // alternate λ so the entropy-regularizer path is exercised
            let lambda = [0.0, 0.1, 1.0][(trial % 3) as usize];

            let (_, acts) = mlp_forward(&model, &features).unwrap();
            let analytic = flat_grads(&mlp_backward(&model, &acts, &probs, y, lambda).unwrap());
            let base = flat_params(&model);
            for (idx, &theta) in base.iter().enumerate() {
                let mut plus = model.clone();
                set_flat_param(&mut plus, idx, theta + step);
                let mut minus = model.clone();
                set_flat_param(&mut minus, idx, theta - step);
                let numeric = (case_loss(&plus, &features, &probs, y, lambda)
                    - case_loss(&minus, &features, &probs, y, lambda))
                    / (2.0 * step);
                let a = analytic[idx];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((a - numeric) / denom).abs() < 1e-4,
                    "trial {trial} param {idx}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    });
}

// ---------------------------------------------------------------------------
// 4. Agent mapping exactness

#[test]
fn acceptance_4_agent_mapping_exactness() {
    criterion(4, "confidence categories map exactly onto the uncertainty scale", || {
        assert_eq!(category_to_uncertainty(ConfidenceCategory::DefinitelyYes), 0.0);
        assert_eq!(category_to_uncertainty(ConfidenceCategory::DefinitelyNo), 0.0);
        assert_eq!(category_to_uncertainty(ConfidenceCategory::LikelyYes), 0.5);
        assert_eq!(category_to_uncertainty(ConfidenceCategory::LikelyNo), 0.5);
        assert_eq!(category_to_uncertainty(ConfidenceCategory::Uncertain), 1.0);
        // worked verdict: a "Likely No" judgment
        let raw = r#"{"Decision": "Likely No",
            "Explanation": "Most answers agree the finding is absent."}"#;
        let (category, explanation) = parse_verdict(raw).unwrap();
        assert_eq!(category, ConfidenceCategory::LikelyNo);
        assert_eq!(category_to_uncertainty(category), 0.5);
        assert_eq!(category.decision(), Some(Answer::No));
        assert!(explanation.contains("absent"));
    });
}

// ---------------------------------------------------------------------------
// 5. Filtering contracts

fn random_cases(rng: &mut ChaCha8Rng) -> Vec<EvalCase> {
    let n = rng.gen_range(1..60);
    (0..n)
        .map(|i| EvalCase {
            id: format!("c{i}"),
            // coarse grid induces plenty of uncertainty ties
            uncertainty: rng.gen_range(0..=10) as f64 / 10.0,
            predicted: rng.gen_bool(0.5),
            truth: rng.gen_bool(0.5),
        })
        .collect()
}

#[test]
fn acceptance_5_filtering_contracts() {
    criterion(5, "uncertainty filtering invariants hold on randomized case sets", || {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..1_000 {
            let cases = random_cases(&mut rng);
            let threshold = rng.gen_range(0..=10) as f64 / 10.0;
            let qualifying: Vec<usize> = (0..cases.len())
                .filter(|&i| cases[i].uncertainty >= threshold)
                .collect();

            match evalkit::filter_by_uncertainty(&cases, threshold) {
                Ok(report) => {
                    assert_eq!(report.kept.len() + report.excluded.len(), cases.len());
                    let excluded: Vec<usize> = report.excluded.iter().map(|&(i, _)| i).collect();
                    assert_eq!(excluded, qualifying, "threshold exclusions are exactly the qualifying set");
                    for &i in &report.kept {
                        assert!(cases[i].uncertainty < threshold);
                    }
                }
                Err(_) => assert_eq!(qualifying.len(), cases.len(), "errors only when nothing survives"),
            }

            let cap = rng.gen_range(1..=10) as f64 / 10.0;
            let report = evalkit::filter_capped(&cases, threshold, cap).unwrap();
            let budget = (cap * cases.len() as f64).floor() as usize;
            assert!(report.excluded.len() <= budget, "cap budget respected");
            assert_eq!(report.kept.len() + report.excluded.len(), cases.len());
            let excluded: Vec<usize> = report.excluded.iter().map(|&(i, _)| i).collect();
            // capped exclusions are a subset of the threshold-qualifying cases
            assert!(excluded.iter().all(|i| qualifying.contains(i)));
            assert_eq!(report.excluded.len(), budget.min(qualifying.len()));
            // only the highest-uncertainty candidates are dropped, ties by input order
            if let Some(min_excluded) = report
                .excluded
                .iter()
                .map(|&(_, u)| u)
                .fold(None::<f64>, |m, u| Some(m.map_or(u, |m| m.min(u))))
            {
                for &i in &report.kept {
                    if cases[i].uncertainty >= threshold {
                        assert!(cases[i].uncertainty <= min_excluded);
                        if cases[i].uncertainty == min_excluded {
                            assert!(excluded.iter().all(|&e| e < i || cases[e].uncertainty > min_excluded));
                        }
                    }
                }
            }
        }

        // the 462-case budget: floor(0.2 · 462) = 92 exclusions
        let saturated: Vec<EvalCase> = (0..462)
            .map(|i| EvalCase {
                id: format!("s{i}"),
                uncertainty: 1.0,
                predicted: i % 2 == 0,
                truth: i % 3 == 0,
            })
            .collect();
        let report = evalkit::filter_capped(&saturated, 0.5, 0.2).unwrap();
        assert_eq!(report.excluded.len(), 92);
        assert!((report.excluded.len() as f64 / 462.0 - 0.1991).abs() < 5e-4);
    });
}

// ---------------------------------------------------------------------------
// 6 & 7. Seeded end-to-end pipeline, shared between criteria

struct PipelineRun {
    _dir: tempfile::TempDir,
    out_dir: PathBuf,
    outputs: EvaluationOutputs,
}

fn pipeline_run() -> &'static PipelineRun {
    static RUN: OnceLock<PipelineRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let mut config = RunConfig::default();
        config.dataset.path =
            Path::new(env!("CARGO_MANIFEST_DIR")).join("data/mini_corpus.jsonl");
        config.output.dir = dir.path().join("out");
        assert_eq!(
            config.extraction.mock_template_accuracy,
            vec![0.9, 0.9, 0.9, 0.55, 0.55, 0.55]
        );
        cmd_run(&config, false).expect("run");
        cmd_optimize(&config).expect("optimize");
        cmd_train_mlp(&config).expect("train-mlp");
        let outputs = cmd_evaluate(&config).expect("evaluate");
        PipelineRun {
            out_dir: config.output.dir.clone(),
            _dir: dir,
            outputs,
        }
    })
}

#[test]
fn acceptance_6_calibration_separation() {
    criterion(6, "correct predictions carry strictly lower median uncertainty than incorrect ones", || {
        let run = pipeline_run();
        assert_eq!(run.outputs.medians.len(), 4, "four ensemble methods summarized");
        for (method, summary) in &run.outputs.medians {
            let correct = summary.avg_median_correct.expect("correct medians defined");
            let incorrect = summary.avg_median_incorrect.expect("incorrect medians defined");
            assert!(
                correct < incorrect,
                "{}: median correct {correct} !< incorrect {incorrect}",
                method.as_str()
            );
            if *method == Method::Agent {
                assert_eq!(correct, 0.0, "agent verdicts put every correct label's median at 0");
            }
        }
    });
}

#[test]
fn acceptance_7_end_to_end_golden_run() {
    criterion(7, "pipeline output tables are byte-identical to the committed goldens", || {
        let run = pipeline_run();
        let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
        for name in [
            "metrics_unfiltered.csv",
            "metrics_threshold.csv",
            "metrics_capped.csv",
            "median_uncertainty.csv",
            "histograms.csv",
        ] {
            let actual = std::fs::read(run.out_dir.join(name))
                .unwrap_or_else(|e| panic!("read output {name}: {e}"));
            let expected = std::fs::read(golden_dir.join(name))
                .unwrap_or_else(|e| panic!("read golden {name}: {e}"));
            assert!(
                actual == expected,
                "{name} differs from its golden ({} vs {} bytes)",
                actual.len(),
                expected.len()
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 8. Entropy/simplex invariant suite

#[test]
fn acceptance_8_entropy_simplex_invariants() {
    criterion(8, "softmax, simplex and entropy invariants hold over 10,000 random draws", || {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..8);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();

            // softmax: simplex output, shift invariance
            let w = softmax(&x);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(w.iter().all(|&wi| wi >= 0.0));
            WeightVector::new(w.clone()).unwrap();
            let shift = rng.gen_range(-100.0..100.0);
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            for (a, b) in w.iter().zip(softmax(&shifted)) {
                assert!((a - b).abs() < 1e-9);
            }

            // binary entropy: symmetry and bounds
            let p: f64 = rng.gen();
            let h = binary_entropy_uncertainty(p);
            assert!((0.0..=1.0).contains(&h));
            assert!((h - binary_entropy_uncertainty(1.0 - p)).abs() < 1e-12);

            // posterior predictive: convex combination stays within the inputs
            let p_yes: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let p_hat = posterior_predictive(&w, &p_yes).unwrap();
            let lo = p_yes.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p_yes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(p_hat >= lo - 1e-12 && p_hat <= hi + 1e-12);
            assert!((0.0..=1.0).contains(&p_hat.clamp(0.0, 1.0)));
        }
        assert_eq!(binary_entropy_uncertainty(0.5), 1.0);
        assert_eq!(binary_entropy_uncertainty(0.0), 0.0);
        assert_eq!(binary_entropy_uncertainty(1.0), 0.0);
    });
}
