//! Seeded synthetic corpus generator. Produces schema-valid reports with known
//! per-label prevalences; the bundled mini-corpus under `data/` is one fixed
//! output of this generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, RadiologyReport};

/// Default label set for the bundled corpus (organ–finding combinations).
pub const DEFAULT_LABELS: [&str; 8] = [
    "Ileum comb sign",
    "Ileum inflammation",
    "Ileum pre-stenotic dilation",
    "Ileum stenosis",
    "Ileum wall enhancement",
    "Ileum wall thickness",
    "Rectum wall thickness",
    "Sigmoid comb sign",
];

/// Prevalence of positives per label, aligned with `DEFAULT_LABELS`.
pub const DEFAULT_PREVALENCE: [f64; 8] = [0.14, 0.42, 0.16, 0.22, 0.32, 0.43, 0.06, 0.08];

const POSITIVE_PHRASES: [&str; 4] = [
    "findings consistent with",
    "evidence of",
    "marked appearance of",
    "suggestive of",
];

const NEGATIVE_PHRASES: [&str; 4] = [
    "no evidence of",
    "without signs of",
    "unremarkable for",
    "no indication of",
];

const OPENERS: [&str; 4] = [
    "MR enterography study.",
    "CT enterography exam.",
    "בדיקת אנטרוגרפיה. דוח רדיולוגיה:",
    "Follow-up enterography study.",
];

/// Generate `n_reports` synthetic reports over `labels` with the given
/// per-label positive prevalence. Deterministic in `seed`. Negatives are
/// occasionally coded 2 (organ absent) or 9 (organ not visible).
pub fn generate_corpus(
    seed: u64,
    n_reports: usize,
    labels: &[&str],
    prevalence: &[f64],
) -> Dataset {
    assert_eq!(labels.len(), prevalence.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(n_reports);
    for i in 0..n_reports {
        let mut label_codes = BTreeMap::new();
        let mut text = String::from(OPENERS[rng.gen_range(0..OPENERS.len())]);
        for (label, &p) in labels.iter().zip(prevalence) {
            let positive = rng.gen::<f64>() < p;
            let code = if positive {
                1
            } else {
                let roll: f64 = rng.gen();
                if roll < 0.04 {
                    2
                } else if roll < 0.07 {
                    9
                } else {
                    0
                }
            };
            label_codes.insert(label.to_string(), code);
            let phrase = if positive {
                POSITIVE_PHRASES[rng.gen_range(0..POSITIVE_PHRASES.len())]
            } else {
                NEGATIVE_PHRASES[rng.gen_range(0..NEGATIVE_PHRASES.len())]
            };
            text.push(' ');
            text.push_str(phrase);
            text.push(' ');
            text.push_str(&label.to_lowercase());
            text.push('.');
        }
        reports.push(RadiologyReport {
            report_id: format!("r{i:04}"),
            patient_id: Some(format!("p{:04}", i / 2)),
            text,
            labels: label_codes,
        });
    }
    Dataset { reports }
}

/// The bundled 500-report, 8-label mini-corpus.
pub fn mini_corpus() -> Dataset {
    generate_corpus(20250, 500, &DEFAULT_LABELS, &DEFAULT_PREVALENCE)
}

/// Serialize a dataset as line-delimited JSON.
pub fn to_jsonl(dataset: &Dataset) -> String {
    let mut out = String::new();
    for report in &dataset.reports {
        out.push_str(&serde_json::to_string(report).expect("report serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{binarize_labels, select_labels};

    #[test]
    fn generator_is_deterministic() {
        let a = to_jsonl(&mini_corpus());
        let b = to_jsonl(&mini_corpus());
        assert_eq!(a, b);
    }

    #[test]
    fn mini_corpus_shape() {
        let ds = mini_corpus();
        assert_eq!(ds.len(), 500);
        let bin = binarize_labels(&ds).unwrap();
        let counts = bin.label_counts();
        assert_eq!(counts.len(), 8);
        // every default label survives the >15 positives cut
        let selected = select_labels(&bin, 15);
        assert_eq!(selected.len(), 8);
    }
}
