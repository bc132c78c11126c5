//! Dataset ingestion: line-delimited JSON reports with multi-valued label codes,
//! binarization (codes 2 and 9 collapse to negative), label selection by positive
//! count, and deterministic splits and tuning subsets.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod synth;

/// Raw label codes: 0 negative, 1 positive, 2 organ absent (surgery),
/// 9 organ not visible.
pub const VALID_CODES: [u8; 4] = [0, 1, 2, 9];

/// One free-text report plus its raw label codes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiologyReport {
    pub report_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    pub text: String,
    pub labels: BTreeMap<String, u8>,
}

/// A loaded dataset; input order preserved, ids unique.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub reports: Vec<RadiologyReport>,
}

/// A report after binarization: true = positive (raw code 1).
#[derive(Debug, Clone)]
pub struct BinaryReport {
    pub report_id: String,
    pub patient_id: Option<String>,
    pub text: String,
    pub labels: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
pub struct BinaryDataset {
    pub reports: Vec<BinaryReport>,
}

/// Deterministic train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Sidecar manifest with per-label positive counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub report_count: usize,
    pub labels: BTreeMap<String, LabelCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

impl BinaryDataset {
    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.reports.iter().map(|r| r.report_id.clone()).collect()
    }

    pub fn get(&self, report_id: &str) -> Option<&BinaryReport> {
        self.reports.iter().find(|r| r.report_id == report_id)
    }

    /// Positive/negative counts per label, one pass.
    pub fn label_counts(&self) -> BTreeMap<String, LabelCounts> {
        let mut counts: BTreeMap<String, LabelCounts> = BTreeMap::new();
        for report in &self.reports {
            for (label, &positive) in &report.labels {
                let entry = counts.entry(label.clone()).or_insert(LabelCounts {
                    positive: 0,
                    negative: 0,
                });
                if positive {
                    entry.positive += 1;
                } else {
                    entry.negative += 1;
                }
            }
        }
        counts
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            report_count: self.reports.len(),
            labels: self.label_counts(),
        }
    }
}

/// Load a line-delimited JSON dataset. Each line is one report object with
/// `report_id`, optional `patient_id`, `text`, and `labels` (name → raw code).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut reports = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let report: RadiologyReport =
            serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if report.text.is_empty() {
            return Err(Error::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("report {} has empty text", report.report_id),
            });
        }
        for (label, &code) in &report.labels {
            if !VALID_CODES.contains(&code) {
                return Err(Error::LabelCodeOutOfRange {
                    report_id: report.report_id.clone(),
                    label: label.clone(),
                    code: code as i64,
                });
            }
        }
        if !seen.insert(report.report_id.clone()) {
            return Err(Error::DuplicateId(report.report_id));
        }
        reports.push(report);
    }
    Ok(Dataset { reports })
}

/// Collapse raw codes to binary: 1 → positive; 0, 2, 9 → negative.
pub fn binarize_labels(dataset: &Dataset) -> Result<BinaryDataset> {
    let mut reports = Vec::with_capacity(dataset.reports.len());
    for report in &dataset.reports {
        let mut labels = BTreeMap::new();
        for (label, &code) in &report.labels {
            if !VALID_CODES.contains(&code) {
                return Err(Error::LabelCodeOutOfRange {
                    report_id: report.report_id.clone(),
                    label: label.clone(),
                    code: code as i64,
                });
            }
            labels.insert(label.clone(), code == 1);
        }
        reports.push(BinaryReport {
            report_id: report.report_id.clone(),
            patient_id: report.patient_id.clone(),
            text: report.text.clone(),
            labels,
        });
    }
    Ok(BinaryDataset { reports })
}

/// Labels with strictly more than `min_positives` positive cases, sorted by name.
pub fn select_labels(dataset: &BinaryDataset, min_positives: usize) -> Vec<String> {
    dataset
        .label_counts()
        .into_iter()
        .filter(|(_, c)| c.positive > min_positives)
        .map(|(name, _)| name)
        .collect()
}

/// Deterministic split. Validation and test get floor allocations; the remainder
/// goes to train.
pub fn split_dataset(
    dataset: &BinaryDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if ft <= 0.0 || fv <= 0.0 || fe <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions([ft, fv, fe]));
    }
    let n = dataset.len();
    let n_val = (fv * n as f64).floor() as usize;
    let n_test = (fe * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut ids = dataset.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let train_ids = ids[..n_train].to_vec();
    let validation_ids = ids[n_train..n_train + n_val].to_vec();
    let test_ids = ids[n_train + n_val..].to_vec();
    Ok(DatasetSplit {
        train_ids,
        validation_ids,
        test_ids,
        seed,
    })
}

/// Deterministic n-element sample without replacement, e.g. the fixed subset
/// used to tune per-label linear weights. Disjointness from the evaluation
/// pass is enforced downstream by id exclusion.
pub fn holdout_tuning_subset(dataset: &BinaryDataset, n: usize, seed: u64) -> Result<Vec<String>> {
    if n > dataset.len() {
        return Err(Error::SubsetTooLarge {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut ids = dataset.ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.truncate(n);
    Ok(ids)
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
