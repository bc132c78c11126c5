//! Classification metrics, uncertainty filtering (uncapped and capped), and
//! calibration artifacts: histograms and median-uncertainty summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Count the four cells; positive class = true.
    pub fn from_cases(predictions: &[bool], truths: &[bool]) -> Result<Self> {
        if predictions.len() != truths.len() {
            return Err(Error::LengthMismatch {
                predictions: predictions.len(),
                truths: truths.len(),
            });
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &t) in predictions.iter().zip(truths) {
            match (p, t) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub kappa: f64,
    pub included_cases: u64,
    pub excluded_cases: u64,
    pub excluded_fraction: f64,
}

/// Accuracy, precision, recall, F1 and Cohen's kappa, with every degenerate
/// denominator mapped to 0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsRecord> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::EmptyConfusionMatrix);
    }
    let nf = n as f64;
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let accuracy = (tp + tn) / nf;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let p_o = accuracy;
    let p_e = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (nf * nf);
    let kappa = if (1.0 - p_e).abs() > 0.0 {
        (p_o - p_e) / (1.0 - p_e)
    } else {
        0.0
    };
    Ok(MetricsRecord {
        accuracy,
        f1,
        precision,
        recall,
        kappa,
        included_cases: n,
        excluded_cases: 0,
        excluded_fraction: 0.0,
    })
}

/// Unweighted arithmetic mean of each metric across labels; case counts summed.
pub fn macro_average(records: &[MetricsRecord]) -> Result<MetricsRecord> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let included: u64 = records.iter().map(|r| r.included_cases).sum();
    let excluded: u64 = records.iter().map(|r| r.excluded_cases).sum();
    let total = included + excluded;
    Ok(MetricsRecord {
        accuracy: mean(|r| r.accuracy),
        f1: mean(|r| r.f1),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        kappa: mean(|r| r.kappa),
        included_cases: included,
        excluded_cases: excluded,
        excluded_fraction: if total > 0 {
            excluded as f64 / total as f64
        } else {
            0.0
        },
    })
}

/// Single-prompt baseline: metrics per template, then an unweighted average
/// across templates. Baseline cases carry uncertainty 0 and are never filtered.
pub fn baseline_single_prompt(
    per_template_predictions: &[Vec<bool>],
    truths: &[bool],
) -> Result<MetricsRecord> {
    if per_template_predictions.is_empty() {
        return Err(Error::NoRecords);
    }
    let per_template: Vec<MetricsRecord> = per_template_predictions
        .iter()
        .map(|preds| metrics(&ConfusionMatrix::from_cases(preds, truths)?))
        .collect::<Result<_>>()?;
    let mut avg = macro_average(&per_template)?;
    // averaging across templates does not multiply the case count
    avg.included_cases = truths.len() as u64;
    avg.excluded_cases = 0;
    avg.excluded_fraction = 0.0;
    Ok(avg)
}

/// One evaluated case, as the filters see it.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub id: String,
    pub uncertainty: f64,
    pub predicted: bool,
    pub truth: bool,
}

impl EvalCase {
    pub fn correct(&self) -> bool {
        self.predicted == self.truth
    }
}

/// Which input indices survived a filtering pass; `excluded` pairs each
/// dropped index with its uncertainty.
#[derive(Debug, Clone)]
pub struct FilterReport {
    pub threshold: f64,
    pub cap_fraction: Option<f64>,
    pub kept: Vec<usize>,
    pub excluded: Vec<(usize, f64)>,
}

impl FilterReport {
    pub fn kept_cases<'a>(&self, cases: &'a [EvalCase]) -> Vec<&'a EvalCase> {
        self.kept.iter().map(|&i| &cases[i]).collect()
    }
}

/// Exclude exactly the cases with uncertainty ≥ threshold (inclusive, so that
/// half-confidence verdicts are filterable). Errors when nothing survives.
pub fn filter_by_uncertainty(cases: &[EvalCase], threshold: f64) -> Result<FilterReport> {
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        if case.uncertainty >= threshold {
            excluded.push((i, case.uncertainty));
        } else {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::AllCasesExcluded { threshold });
    }
    Ok(FilterReport {
        threshold,
        cap_fraction: None,
        kept,
        excluded,
    })
}

/// Threshold filtering with exclusions limited to floor(cap · n) cases: when
/// more candidates qualify, only the highest-uncertainty ones are dropped,
/// ties broken by stable input order.
pub fn filter_capped(cases: &[EvalCase], threshold: f64, cap_fraction: f64) -> Result<FilterReport> {
    if !(0.0..=1.0).contains(&cap_fraction) || cap_fraction <= 0.0 {
        return Err(Error::Config(format!(
            "cap fraction must be in (0, 1], got {cap_fraction}"
        )));
    }
    let budget = (cap_fraction * cases.len() as f64).floor() as usize;
    let mut candidates: Vec<(usize, f64)> = cases
        .iter()
        .enumerate()
        .filter(|(_, c)| c.uncertainty >= threshold)
        .map(|(i, c)| (i, c.uncertainty))
        .collect();
    // stable sort keeps input order among equal uncertainties
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    candidates.truncate(budget);
    let mut excluded_idx: Vec<bool> = vec![false; cases.len()];
    for &(i, _) in &candidates {
        excluded_idx[i] = true;
    }
    let kept = (0..cases.len()).filter(|&i| !excluded_idx[i]).collect();
    let mut excluded = candidates;
    excluded.sort_by_key(|&(i, _)| i);
    Ok(FilterReport {
        threshold,
        cap_fraction: Some(cap_fraction),
        kept,
        excluded,
    })
}

/// Metrics over the kept cases of a filter report, with the exclusion
/// accounting filled in.
pub fn metrics_after_filter(cases: &[EvalCase], report: &FilterReport) -> Result<MetricsRecord> {
    let kept = report.kept_cases(cases);
    let preds: Vec<bool> = kept.iter().map(|c| c.predicted).collect();
    let truths: Vec<bool> = kept.iter().map(|c| c.truth).collect();
    let mut record = metrics(&ConfusionMatrix::from_cases(&preds, &truths)?)?;
    record.excluded_cases = report.excluded.len() as u64;
    record.excluded_fraction = if cases.is_empty() {
        0.0
    } else {
        record.excluded_cases as f64 / cases.len() as f64
    };
    Ok(record)
}

/// True when the kept cases no longer contain both truth classes, which makes
/// several metrics degenerate; such labels are flagged out of macro averages.
pub fn class_emptied(cases: &[&EvalCase]) -> bool {
    let positives = cases.iter().filter(|c| c.truth).count();
    positives == 0 || positives == cases.len()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub correct_count: u64,
    pub incorrect_count: u64,
}

/// Equal-width bins over [0,1], last bin closed, split by correctness.
pub fn uncertainty_histogram(cases: &[(f64, bool)], bin_count: usize) -> Vec<HistogramBin> {
    let bins = bin_count.max(1);
    let width = 1.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            bin_low: i as f64 * width,
            bin_high: (i + 1) as f64 * width,
            correct_count: 0,
            incorrect_count: 0,
        })
        .collect();
    for &(u, correct) in cases {
        let idx = ((u * bins as f64).floor() as usize).min(bins - 1);
        if correct {
            out[idx].correct_count += 1;
        } else {
            out[idx].incorrect_count += 1;
        }
    }
    out
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Per-label median uncertainties for correct and incorrect predictions,
/// averaged across labels. A label missing one side contributes only to the
/// other.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MedianSummary {
    pub avg_median_correct: Option<f64>,
    pub avg_median_incorrect: Option<f64>,
    pub labels_with_correct: usize,
    pub labels_with_incorrect: usize,
}

pub fn median_uncertainty_summary(per_label_cases: &[Vec<(f64, bool)>]) -> Result<MedianSummary> {
    let mut correct_medians = Vec::new();
    let mut incorrect_medians = Vec::new();
    for cases in per_label_cases {
        let mut correct: Vec<f64> = cases.iter().filter(|c| c.1).map(|c| c.0).collect();
        let mut incorrect: Vec<f64> = cases.iter().filter(|c| !c.1).map(|c| c.0).collect();
        if let Some(m) = median(&mut correct) {
            correct_medians.push(m);
        }
        if let Some(m) = median(&mut incorrect) {
            incorrect_medians.push(m);
        }
    }
    if correct_medians.is_empty() && incorrect_medians.is_empty() {
        return Err(Error::NoDefinedMedians);
    }
    let avg = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(MedianSummary {
        avg_median_correct: avg(&correct_medians),
        avg_median_incorrect: avg(&incorrect_medians),
        labels_with_correct: correct_medians.len(),
        labels_with_incorrect: incorrect_medians.len(),
    })
}

/// Fixed 6-decimal float rendering; −0 rounds to an unsigned zero so outputs
/// are platform-stable.
pub fn fmt_f64(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// One output table row: a metrics record tagged with method and label
/// ("macro" rows carry the label "ALL").
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub label: String,
    #[serde(flatten)]
    pub record: MetricsRecord,
    /// True when filtering emptied a truth class for this label; flagged rows
    /// are excluded from the macro average.
    pub degenerate: bool,
}

pub const METRICS_CSV_HEADER: &str =
    "method,label,accuracy,f1,precision,recall,kappa,included_cases,excluded_cases,excluded_fraction,degenerate";

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn metrics_csv_string(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for row in rows {
        let r = &row.record;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_quote(&row.method),
            csv_quote(&row.label),
            fmt_f64(r.accuracy),
            fmt_f64(r.f1),
            fmt_f64(r.precision),
            fmt_f64(r.recall),
            fmt_f64(r.kappa),
            r.included_cases,
            r.excluded_cases,
            fmt_f64(r.excluded_fraction),
            row.degenerate,
        ));
    }
    out
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv_string(rows)).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_json(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(rows)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub const HISTOGRAM_CSV_HEADER: &str =
    "method,label,bin_low,bin_high,correct_count,incorrect_count";

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub method: String,
    pub label: String,
    #[serde(flatten)]
    pub bin: HistogramBin,
}

pub fn histogram_csv_string(rows: &[HistogramRow]) -> String {
    let mut out = String::from(HISTOGRAM_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_quote(&row.method),
            csv_quote(&row.label),
            fmt_f64(row.bin.bin_low),
            fmt_f64(row.bin.bin_high),
            row.bin.correct_count,
            row.bin.incorrect_count,
        ));
    }
    out
}

pub fn write_histogram_csv(rows: &[HistogramRow], path: &Path) -> Result<()> {
    std::fs::write(path, histogram_csv_string(rows)).map_err(|e| Error::io(path, e))
}

/// Terminal bar rendering of one histogram: correct bars as '#', incorrect
/// as 'x', scaled to a fixed width.
pub fn render_histogram_text(bins: &[HistogramBin]) -> String {
    const WIDTH: usize = 40;
    let max = bins
        .iter()
        .map(|b| b.correct_count.max(b.incorrect_count))
        .max()
        .unwrap_or(0)
        .max(1);
    let mut out = String::new();
    for b in bins {
        let bar = |count: u64, ch: char| {
            let len = ((count as f64 / max as f64) * WIDTH as f64).round() as usize;
            ch.to_string().repeat(len)
        };
        out.push_str(&format!(
            "[{:.2},{:.2}] correct {:>5} |{}\n",
            b.bin_low,
            b.bin_high,
            b.correct_count,
            bar(b.correct_count, '#')
        ));
        out.push_str(&format!(
            "            wrong   {:>5} |{}\n",
            b.incorrect_count,
            bar(b.incorrect_count, 'x')
        ));
    }
    out
}
