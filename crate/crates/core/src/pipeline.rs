//! End-to-end orchestration: ingest, ensemble querying, weight optimization,
//! MLP training and evaluation, all driven by one `RunConfig`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::agent::agent_aggregate;
use crate::aggregator::{aggregate, EnsemblePrediction, Method, WeightVector};
use crate::config::{BackendKind, RunConfig};
use crate::corpus::{
    binarize_labels, holdout_tuning_subset, load_dataset, select_labels, split_dataset,
    BinaryDataset, CorpusManifest, DatasetSplit,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    self, filter_by_uncertainty, filter_capped, EvalCase, HistogramRow, MedianSummary,
    MetricsRecord, MetricsRow,
};
use crate::gateway::mock::{MockBackend, MockJudgeBackend};
use crate::gateway::{
    cached_ensemble_query, Backend, ProbabilityStrategy, PromptResponse, ResponseCache,
};
use crate::prompt_kit::{builtin_prompt_set, load_prompt_set, PromptSet};
use crate::weight_opt::mlp::{
    build_case_features, load_model, mlp_forward, prompt_embeddings, save_model,
    PromptObservation, TrainCase,
};
use crate::weight_opt::{optimize_linear_weights, LinearCase};

/// Everything derived deterministically from the dataset configuration.
pub struct PreparedData {
    pub dataset: BinaryDataset,
    pub labels: Vec<String>,
    pub split: DatasetSplit,
    /// Held-out cases used to tune the linear weights, drawn from the test split.
    pub tuning_ids: Vec<String>,
    /// Test cases minus the tuning ids; every method is evaluated here.
    pub eval_ids: Vec<String>,
}

fn subset(dataset: &BinaryDataset, ids: &[String]) -> BinaryDataset {
    let by_id: BTreeMap<&str, &crate::corpus::BinaryReport> = dataset
        .reports
        .iter()
        .map(|r| (r.report_id.as_str(), r))
        .collect();
    BinaryDataset {
        reports: ids
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).map(|&r| r.clone()))
            .collect(),
    }
}

pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    let raw = load_dataset(&config.dataset.path)?;
    let dataset = binarize_labels(&raw)?;
    let labels = select_labels(&dataset, config.dataset.min_positives);
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let f = config.dataset.split_fractions;
    let split = split_dataset(&dataset, (f[0], f[1], f[2]), config.dataset.split_seed)?;
    let test_set = subset(&dataset, &split.test_ids);
    let tuning_n = config.dataset.tuning_size.min(test_set.len());
    let tuning_ids = holdout_tuning_subset(&test_set, tuning_n, config.dataset.tuning_seed)?;
    let eval_ids: Vec<String> = split
        .test_ids
        .iter()
        .filter(|id| !tuning_ids.contains(id))
        .cloned()
        .collect();
    Ok(PreparedData {
        dataset,
        labels,
        split,
        tuning_ids,
        eval_ids,
    })
}

pub fn load_prompts(config: &RunConfig) -> Result<PromptSet> {
    match &config.prompts.path {
        Some(path) => load_prompt_set(path),
        None => Ok(builtin_prompt_set()),
    }
}

pub fn make_extraction_backend(
    config: &RunConfig,
    dataset: &BinaryDataset,
    labels: &[String],
) -> Result<Box<dyn Backend>> {
    match config.extraction.kind {
        BackendKind::Mock => {
            let truth = MockBackend::truth_from_dataset(dataset, labels);
            Ok(Box::new(MockBackend::new(
                config.extraction.mock_seed,
                config.extraction.mock_template_accuracy.clone(),
                truth,
            )))
        }
        BackendKind::Http => Ok(Box::new(crate::gateway::http::HttpBackend::new(
            "http",
            config.extraction.backend_config(),
            config.extraction.api_key.clone(),
        )?)),
    }
}

pub fn make_judge_backend(config: &RunConfig) -> Result<Box<dyn Backend>> {
    match config.judge.kind {
        BackendKind::Mock => Ok(Box::new(MockJudgeBackend::new())),
        BackendKind::Http => Ok(Box::new(crate::gateway::http::HttpBackend::new(
            "http-judge",
            config.judge.backend_config(),
            config.judge.api_key.clone(),
        )?)),
    }
}

fn ensure_output_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output.dir).map_err(|e| Error::io(&config.output.dir, e))
}

/// Load, binarize, select labels, and write the manifest.
pub fn cmd_ingest(config: &RunConfig) -> Result<CorpusManifest> {
    ensure_output_dir(config)?;
    let prepared = prepare(config)?;
    let manifest = prepared.dataset.manifest();
    crate::corpus::write_manifest(&manifest, &config.output.manifest_path())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub reports: usize,
    pub labels: usize,
    pub templates: usize,
    /// (report, label, template, attempt) requests the run needs in total.
    pub total_requests: usize,
    pub cached_before: usize,
    pub sent: usize,
}

/// Query every (report, label, template) of the corpus through the cache.
/// Resumable: warm cache entries are never re-sent. With `dry_run`, nothing is
/// queried and `sent` reports what a live run would send.
pub fn cmd_run(config: &RunConfig, dry_run: bool) -> Result<RunSummary> {
    ensure_output_dir(config)?;
    let prepared = prepare(config)?;
    let prompt_set = load_prompts(config)?;
    let backend = make_extraction_backend(config, &prepared.dataset, &prepared.labels)?;
    let mut cache = ResponseCache::open(&config.output.cache_path())?;
    let samples = match config.run.probability {
        ProbabilityStrategy::Vote { k } => k.max(1) as usize,
        _ => 1,
    };
    let total_requests =
        prepared.dataset.len() * prepared.labels.len() * prompt_set.len() * samples;
    let cached_before = cache.len();
    if dry_run {
        return Ok(RunSummary {
            reports: prepared.dataset.len(),
            labels: prepared.labels.len(),
            templates: prompt_set.len(),
            total_requests,
            cached_before,
            sent: total_requests.saturating_sub(cached_before),
        });
    }
    for report in &prepared.dataset.reports {
        for label in &prepared.labels {
            cached_ensemble_query(
                &report.report_id,
                &report.text,
                label,
                &prompt_set,
                backend.as_ref(),
                &mut cache,
                config.run.probability,
                config.run.fallback_to_hard,
            )?;
        }
    }
    Ok(RunSummary {
        reports: prepared.dataset.len(),
        labels: prepared.labels.len(),
        templates: prompt_set.len(),
        total_requests,
        cached_before,
        sent: cache.len().saturating_sub(cached_before),
    })
}

fn responses_for(
    prepared: &PreparedData,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    cache: &mut ResponseCache,
    config: &RunConfig,
    ids: &[String],
    label: &str,
) -> Result<Vec<(String, Vec<PromptResponse>)>> {
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let report = prepared
            .dataset
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown report id {id}")))?;
        let responses = cached_ensemble_query(
            id,
            &report.text,
            label,
            prompt_set,
            backend,
            cache,
            config.run.probability,
            config.run.fallback_to_hard,
        )?;
        out.push((id.clone(), responses));
    }
    Ok(out)
}

fn truth_of(prepared: &PreparedData, id: &str, label: &str) -> bool {
    prepared
        .dataset
        .get(id)
        .and_then(|r| r.labels.get(label).copied())
        .unwrap_or(false)
}

fn linear_cases(
    prepared: &PreparedData,
    responses: &[(String, Vec<PromptResponse>)],
    label: &str,
) -> Vec<LinearCase> {
    responses
        .iter()
        .map(|(id, rs)| LinearCase {
            // parse failures carry the documented 0.5 fallback probability
            p_yes: rs.iter().map(|r| r.p_yes).collect(),
            truth: truth_of(prepared, id, label),
        })
        .collect()
}

/// Tune one simplex weight vector per label on the held-out tuning cases and
/// write them as a JSON map.
pub fn cmd_optimize(config: &RunConfig) -> Result<BTreeMap<String, Vec<f64>>> {
    ensure_output_dir(config)?;
    let prepared = prepare(config)?;
    let prompt_set = load_prompts(config)?;
    let backend = make_extraction_backend(config, &prepared.dataset, &prepared.labels)?;
    let mut cache = ResponseCache::open(&config.output.cache_path())?;
    let weights = compute_linear_weights(config, &prepared, &prompt_set, backend.as_ref(), &mut cache)?;
    let json = serde_json::to_string_pretty(&weights)?;
    let path = config.output.linear_weights_path();
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(weights)
}

fn compute_linear_weights(
    config: &RunConfig,
    prepared: &PreparedData,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    cache: &mut ResponseCache,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let opt_config = config.linear.to_opt_config(config.run.seed);
    let mut weights = BTreeMap::new();
    for label in &prepared.labels {
        let responses = responses_for(
            prepared,
            prompt_set,
            backend,
            cache,
            config,
            &prepared.tuning_ids,
            label,
        )?;
        let cases = linear_cases(prepared, &responses, label);
        let w = optimize_linear_weights(&cases, &opt_config)?;
        weights.insert(label.clone(), w.as_slice().to_vec());
    }
    Ok(weights)
}

fn observations(responses: &[PromptResponse]) -> Vec<PromptObservation> {
    responses
        .iter()
        .map(|r| PromptObservation {
            p_yes: r.p_yes,
            parsed: r.parse_status != crate::gateway::ParseStatus::Failed,
        })
        .collect()
}

fn mlp_cases(
    config: &RunConfig,
    prepared: &PreparedData,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    cache: &mut ResponseCache,
    ids: &[String],
    embeddings: Option<&[Vec<f64>]>,
) -> Result<Vec<TrainCase>> {
    let mut cases = Vec::new();
    for label in &prepared.labels {
        let responses = responses_for(prepared, prompt_set, backend, cache, config, ids, label)?;
        for (id, rs) in responses {
            let obs = observations(&rs);
            cases.push(TrainCase {
                features: build_case_features(&obs, embeddings)?,
                prompt_probs: rs.iter().map(|r| r.p_yes).collect(),
                truth: truth_of(prepared, &id, label),
            });
        }
    }
    Ok(cases)
}

/// Train the single cross-label weight MLP on the train split (validation on
/// the validation split), write the model file and a per-epoch loss log.
pub fn cmd_train_mlp(config: &RunConfig) -> Result<PathBuf> {
    ensure_output_dir(config)?;
    let prepared = prepare(config)?;
    let prompt_set = load_prompts(config)?;
    let backend = make_extraction_backend(config, &prepared.dataset, &prepared.labels)?;
    let mut cache = ResponseCache::open(&config.output.cache_path())?;
    let train_config = config.mlp.to_train_config(config.run.seed);
    let layout = crate::weight_opt::FeatureLayout {
        prompt_count: prompt_set.len(),
        embedding_dim: train_config.embedding_dim,
    };
    let embeddings = if train_config.embedding_dim > 0 {
        Some(prompt_embeddings(
            &prompt_set,
            train_config.embedding_dim,
            config.run.seed,
        ))
    } else {
        None
    };
    let train = mlp_cases(
        config,
        &prepared,
        &prompt_set,
        backend.as_ref(),
        &mut cache,
        &prepared.split.train_ids,
        embeddings.as_deref(),
    )?;
    let validation = mlp_cases(
        config,
        &prepared,
        &prompt_set,
        backend.as_ref(),
        &mut cache,
        &prepared.split.validation_ids,
        embeddings.as_deref(),
    )?;
    let (model, logs) = crate::weight_opt::train_mlp(&train, &validation, layout, &train_config)?;
    let model_path = config.output.mlp_model_path();
    save_model(&model, &train_config, &model_path)?;
    let mut log_csv = String::from("epoch,train_loss,validation_loss\n");
    for entry in &logs {
        log_csv.push_str(&format!(
            "{},{},{}\n",
            entry.epoch,
            evalkit::fmt_f64(entry.train_loss),
            evalkit::fmt_f64(entry.validation_loss)
        ));
    }
    let log_path = config.output.train_log_path();
    std::fs::write(&log_path, log_csv).map_err(|e| Error::io(&log_path, e))?;
    Ok(model_path)
}

/// Per-method, per-label evaluated cases plus the prediction trail.
pub struct MethodEvaluation {
    pub method: Method,
    /// label → cases in eval-id order.
    pub cases: BTreeMap<String, Vec<EvalCase>>,
    pub predictions: Vec<EnsemblePrediction>,
}

pub struct EvaluationOutputs {
    pub unfiltered: Vec<MetricsRow>,
    pub threshold: Vec<MetricsRow>,
    pub capped: Vec<MetricsRow>,
    pub medians: Vec<(Method, MedianSummary)>,
    pub histograms: Vec<HistogramRow>,
    /// Labels flagged degenerate (a truth class emptied) per table.
    pub degenerate_flags: usize,
    pub files: Vec<PathBuf>,
}

fn eval_case(prepared: &PreparedData, pred: &EnsemblePrediction) -> EvalCase {
    EvalCase {
        id: pred.report_id.clone(),
        uncertainty: pred.uncertainty,
        predicted: pred.decision.as_bool(),
        truth: truth_of(prepared, &pred.report_id, &pred.label_name),
    }
}

fn zero_record() -> MetricsRecord {
    MetricsRecord {
        accuracy: 0.0,
        f1: 0.0,
        precision: 0.0,
        recall: 0.0,
        kappa: 0.0,
        included_cases: 0,
        excluded_cases: 0,
        excluded_fraction: 0.0,
    }
}

/// Build one metrics table (per-label rows + a macro "ALL" row) from filtered
/// evaluations. `filter` returns the per-label record, or None when the label
/// is degenerate under this filter.
fn metrics_table(
    method: Method,
    cases_by_label: &BTreeMap<String, Vec<EvalCase>>,
    mut per_label: impl FnMut(&[EvalCase]) -> Result<Option<MetricsRecord>>,
) -> Result<(Vec<MetricsRow>, usize)> {
    let mut rows = Vec::new();
    let mut usable = Vec::new();
    let mut flagged = 0;
    for (label, cases) in cases_by_label {
        match per_label(cases)? {
            Some(record) => {
                usable.push(record);
                rows.push(MetricsRow {
                    method: method.as_str().into(),
                    label: label.clone(),
                    record,
                    degenerate: false,
                });
            }
            None => {
                flagged += 1;
                let mut record = zero_record();
                record.excluded_cases = cases.len() as u64;
                record.excluded_fraction = 1.0;
                rows.push(MetricsRow {
                    method: method.as_str().into(),
                    label: label.clone(),
                    record,
                    degenerate: true,
                });
            }
        }
    }
    let macro_record = if usable.is_empty() {
        zero_record()
    } else {
        evalkit::macro_average(&usable)?
    };
    rows.push(MetricsRow {
        method: method.as_str().into(),
        label: "ALL".into(),
        record: macro_record,
        degenerate: usable.is_empty(),
    });
    Ok((rows, flagged))
}

fn unfiltered_record(cases: &[EvalCase]) -> Result<Option<MetricsRecord>> {
    let refs: Vec<&EvalCase> = cases.iter().collect();
    if cases.is_empty() || evalkit::class_emptied(&refs) {
        return Ok(None);
    }
    let preds: Vec<bool> = cases.iter().map(|c| c.predicted).collect();
    let truths: Vec<bool> = cases.iter().map(|c| c.truth).collect();
    Ok(Some(evalkit::metrics(
        &evalkit::ConfusionMatrix::from_cases(&preds, &truths)?,
    )?))
}

fn filtered_record(cases: &[EvalCase], threshold: f64) -> Result<Option<MetricsRecord>> {
    let report = match filter_by_uncertainty(cases, threshold) {
        Ok(r) => r,
        Err(Error::AllCasesExcluded { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if evalkit::class_emptied(&report.kept_cases(cases)) {
        return Ok(None);
    }
    Ok(Some(evalkit::metrics_after_filter(cases, &report)?))
}

fn capped_record(cases: &[EvalCase], threshold: f64, cap: f64) -> Result<Option<MetricsRecord>> {
    let report = filter_capped(cases, threshold, cap)?;
    if report.kept.is_empty() || evalkit::class_emptied(&report.kept_cases(cases)) {
        return Ok(None);
    }
    Ok(Some(evalkit::metrics_after_filter(cases, &report)?))
}

/// Evaluate one ensemble method over the eval ids.
fn evaluate_method(
    config: &RunConfig,
    prepared: &PreparedData,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    judge: &dyn Backend,
    cache: &mut ResponseCache,
    method: Method,
    linear_weights: Option<&BTreeMap<String, Vec<f64>>>,
    mlp: Option<&(crate::weight_opt::MlpModel, Option<Vec<Vec<f64>>>)>,
) -> Result<MethodEvaluation> {
    let uniform = WeightVector::uniform(prompt_set.len())?;
    let mut cases: BTreeMap<String, Vec<EvalCase>> = BTreeMap::new();
    let mut predictions = Vec::new();
    for label in &prepared.labels {
        let responses = responses_for(
            prepared,
            prompt_set,
            backend,
            cache,
            config,
            &prepared.eval_ids,
            label,
        )?;
        let mut label_cases = Vec::with_capacity(responses.len());
        for (_, rs) in &responses {
            let pred = match method {
                Method::Uniform => aggregate(method, rs, &uniform, config.run.uncertainty)?,
                Method::Linear => {
                    let weights = linear_weights
                        .and_then(|m| m.get(label))
                        .ok_or_else(|| {
                            Error::Config(format!("no linear weights for label {label}"))
                        })?;
                    let w = WeightVector::new(weights.clone())?;
                    aggregate(method, rs, &w, config.run.uncertainty)?
                }
                Method::Mlp => {
                    let (model, embeddings) = mlp.ok_or_else(|| {
                        Error::Config("mlp method requires a trained model file".into())
                    })?;
                    let obs = observations(rs);
                    let features = build_case_features(&obs, embeddings.as_deref())?;
                    let (w, _) = mlp_forward(model, &features)?;
                    aggregate(method, rs, &w, config.run.uncertainty)?
                }
                Method::Agent => agent_aggregate(rs, judge, cache)?,
                Method::Baseline => unreachable!("baseline handled separately"),
            };
            label_cases.push(eval_case(prepared, &pred));
            predictions.push(pred);
        }
        cases.insert(label.clone(), label_cases);
    }
    Ok(MethodEvaluation {
        method,
        cases,
        predictions,
    })
}

/// Baseline rows: per-template metrics averaged, zero exclusions everywhere.
fn baseline_rows(
    prepared: &PreparedData,
    prompt_set: &PromptSet,
    backend: &dyn Backend,
    cache: &mut ResponseCache,
    config: &RunConfig,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    let mut usable = Vec::new();
    for label in &prepared.labels {
        let responses = responses_for(
            prepared,
            prompt_set,
            backend,
            cache,
            config,
            &prepared.eval_ids,
            label,
        )?;
        let truths: Vec<bool> = responses
            .iter()
            .map(|(id, _)| truth_of(prepared, id, label))
            .collect();
        let per_template: Vec<Vec<bool>> = (0..prompt_set.len())
            .map(|t| {
                responses
                    .iter()
                    .map(|(_, rs)| crate::aggregator::decide(rs[t].p_yes).as_bool())
                    .collect()
            })
            .collect();
        let record = evalkit::baseline_single_prompt(&per_template, &truths)?;
        usable.push(record);
        rows.push(MetricsRow {
            method: Method::Baseline.as_str().into(),
            label: label.clone(),
            record,
            degenerate: false,
        });
    }
    rows.push(MetricsRow {
        method: Method::Baseline.as_str().into(),
        label: "ALL".into(),
        record: evalkit::macro_average(&usable)?,
        degenerate: false,
    });
    Ok(rows)
}

/// Full evaluation: unfiltered, threshold-filtered and capped metrics tables,
/// the median-uncertainty summary, and calibration histograms; all written
/// under the output directory.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvaluationOutputs> {
    ensure_output_dir(config)?;
    let prepared = prepare(config)?;
    let prompt_set = load_prompts(config)?;
    let backend = make_extraction_backend(config, &prepared.dataset, &prepared.labels)?;
    let judge = make_judge_backend(config)?;
    let mut cache = ResponseCache::open(&config.output.cache_path())?;
    let methods = config.run.parsed_methods()?;

    // linear weights: from the optimize artifact if present, else tuned now
    let linear_weights = if methods.contains(&Method::Linear) {
        let path = config.output.linear_weights_path();
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            Some(compute_linear_weights(
                config,
                &prepared,
                &prompt_set,
                backend.as_ref(),
                &mut cache,
            )?)
        }
    } else {
        None
    };
    // the MLP, by contrast, is a training artifact and must already exist
    let mlp = if methods.contains(&Method::Mlp) {
        let path = config.output.mlp_model_path();
        if !path.exists() {
            return Err(Error::Config(format!(
                "mlp method requires a trained model at {} (run train-mlp first)",
                path.display()
            )));
        }
        let (model, train_config) = load_model(&path)?;
        let embeddings = if train_config.embedding_dim > 0 {
            Some(prompt_embeddings(
                &prompt_set,
                train_config.embedding_dim,
                train_config.seed,
            ))
        } else {
            None
        };
        Some((model, embeddings))
    } else {
        None
    };

    let mut unfiltered = Vec::new();
    let mut threshold_rows = Vec::new();
    let mut capped_rows = Vec::new();
    let mut medians = Vec::new();
    let mut histograms = Vec::new();
    let mut degenerate_flags = 0;

    for method in &methods {
        if *method == Method::Baseline {
            let rows = baseline_rows(
                &prepared,
                &prompt_set,
                backend.as_ref(),
                &mut cache,
                config,
            )?;
            // baseline uncertainty is 0 by definition: never filtered
            unfiltered.extend(rows.clone());
            threshold_rows.extend(rows.clone());
            capped_rows.extend(rows);
            continue;
        }
        let evaluation = evaluate_method(
            config,
            &prepared,
            &prompt_set,
            backend.as_ref(),
            judge.as_ref(),
            &mut cache,
            *method,
            linear_weights.as_ref(),
            mlp.as_ref(),
        )?;
        let (rows, f1) = metrics_table(*method, &evaluation.cases, unfiltered_record)?;
        unfiltered.extend(rows);
        let (rows, f2) = metrics_table(*method, &evaluation.cases, |cases| {
            filtered_record(cases, config.run.threshold)
        })?;
        threshold_rows.extend(rows);
        let (rows, f3) = metrics_table(*method, &evaluation.cases, |cases| {
            capped_record(cases, config.run.threshold, config.run.cap)
        })?;
        capped_rows.extend(rows);
        degenerate_flags += f1 + f2 + f3;

        let per_label: Vec<Vec<(f64, bool)>> = evaluation
            .cases
            .values()
            .map(|cases| {
                cases
                    .iter()
                    .map(|c| (c.uncertainty, c.correct()))
                    .collect()
            })
            .collect();
        medians.push((*method, evalkit::median_uncertainty_summary(&per_label)?));
        for (label, cases) in &evaluation.cases {
            let points: Vec<(f64, bool)> =
                cases.iter().map(|c| (c.uncertainty, c.correct())).collect();
            for bin in evalkit::uncertainty_histogram(&points, config.run.bins) {
                histograms.push(HistogramRow {
                    method: method.as_str().into(),
                    label: label.clone(),
                    bin,
                });
            }
        }
    }

    let out = &config.output;
    let files = vec![
        out.dir.join("metrics_unfiltered.csv"),
        out.dir.join("metrics_unfiltered.json"),
        out.dir.join("metrics_threshold.csv"),
        out.dir.join("metrics_threshold.json"),
        out.dir.join("metrics_capped.csv"),
        out.dir.join("metrics_capped.json"),
        out.dir.join("median_uncertainty.csv"),
        out.dir.join("histograms.csv"),
        out.frozen_config_path(),
    ];
    evalkit::write_metrics_csv(&unfiltered, &files[0])?;
    evalkit::write_metrics_json(&unfiltered, &files[1])?;
    evalkit::write_metrics_csv(&threshold_rows, &files[2])?;
    evalkit::write_metrics_json(&threshold_rows, &files[3])?;
    evalkit::write_metrics_csv(&capped_rows, &files[4])?;
    evalkit::write_metrics_json(&capped_rows, &files[5])?;
    std::fs::write(&files[6], median_csv(&medians)).map_err(|e| Error::io(&files[6], e))?;
    evalkit::write_histogram_csv(&histograms, &files[7])?;
    config.write_frozen(&files[8])?;

    Ok(EvaluationOutputs {
        unfiltered,
        threshold: threshold_rows,
        capped: capped_rows,
        medians,
        histograms,
        degenerate_flags,
        files,
    })
}

fn median_csv(medians: &[(Method, MedianSummary)]) -> String {
    let mut out = String::from(
        "method,avg_median_correct,avg_median_incorrect,labels_with_correct,labels_with_incorrect\n",
    );
    let fmt_opt = |v: Option<f64>| v.map(evalkit::fmt_f64).unwrap_or_default();
    for (method, s) in medians {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            method.as_str(),
            fmt_opt(s.avg_median_correct),
            fmt_opt(s.avg_median_incorrect),
            s.labels_with_correct,
            s.labels_with_incorrect
        ));
    }
    out
}
