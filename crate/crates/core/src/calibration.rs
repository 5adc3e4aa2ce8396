//! Calibration math: answer grading, accuracy, binned expected calibration
//! error, and reliability tables.
//!
//! Everything here is a pure function over immutable inputs. Binning is
//! right-inclusive: bin b covers ((b-1)/n, b/n], with confidence 0 folded
//! into bin 1.

use crate::domain::PredictionRecord;
use crate::util::normalize_answer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a prediction is compared to the gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradingMode {
    /// Equality after case-fold, trim, and whitespace collapse.
    Exact,
    /// The first standalone letter A-D in the prediction equals the gold letter.
    ChoiceLetter,
}

/// One equal-width confidence bin with its empirical statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Zero when the bin is empty.
    pub mean_confidence: f64,
    /// Zero when the bin is empty.
    pub empirical_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("empty input")]
    EmptyInput,
    #[error("confidence out of range at record {index}: {value}")]
    OutOfRangeConfidence { index: usize, value: f64 },
    #[error("raw score out of range: {0}")]
    OutOfRangeScore(f64),
    #[error("gold answer is empty")]
    EmptyGold,
    #[error("no standalone choice letter A-D found in prediction")]
    NoLetterFound,
}

/// Grades a prediction against the gold answer.
///
/// In choice-letter mode a missing letter is an error so the caller can
/// count the item incorrect and log a warning.
pub fn grade_answer(
    prediction: &str,
    gold: &str,
    mode: GradingMode,
) -> Result<bool, CalibrationError> {
    if gold.trim().is_empty() {
        return Err(CalibrationError::EmptyGold);
    }
    match mode {
        GradingMode::Exact => Ok(normalize_answer(prediction) == normalize_answer(gold)),
        GradingMode::ChoiceLetter => {
            let letter = extract_choice_letter(prediction).ok_or(CalibrationError::NoLetterFound)?;
            let gold_letter = normalize_answer(gold)
                .chars()
                .next()
                .map(|c| c.to_ascii_uppercase())
                .ok_or(CalibrationError::EmptyGold)?;
            Ok(letter == gold_letter)
        }
    }
}

/// First standalone A-D token (either case) in the text, uppercased.
/// "standalone" means not adjacent to another alphanumeric character, so
/// "(B)" and "B." qualify while the B in "Bravo" does not.
fn extract_choice_letter(text: &str) -> Option<char> {
    let chars: Vec<char> = text.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        let upper = c.to_ascii_uppercase();
        if !('A'..='D').contains(&upper) || !c.is_ascii_alphabetic() {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            return Some(upper);
        }
    }
    None
}

/// Fraction of correct records.
pub fn compute_accuracy(records: &[PredictionRecord]) -> Result<f64, CalibrationError> {
    if records.is_empty() {
        return Err(CalibrationError::EmptyInput);
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

fn check_confidences(records: &[PredictionRecord]) -> Result<(), CalibrationError> {
    for (index, r) in records.iter().enumerate() {
        let value = r.confidence.norm;
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(CalibrationError::OutOfRangeConfidence { index, value });
        }
    }
    Ok(())
}

/// Bin index in 1..=n_bins for a confidence in [0,1].
fn bin_of(conf: f64, n_bins: usize) -> usize {
    if conf <= 0.0 {
        return 1;
    }
    ((conf * n_bins as f64).ceil() as usize).clamp(1, n_bins)
}

/// Expected calibration error with equal-width bins over [0,1]:
/// `ECE = Σ_b (|B_b|/n) · |acc(B_b) − mean_conf(B_b)|`.
pub fn compute_ece(records: &[PredictionRecord], n_bins: usize) -> Result<f64, CalibrationError> {
    if records.is_empty() || n_bins == 0 {
        return Err(CalibrationError::EmptyInput);
    }
    check_confidences(records)?;

    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0f64; n_bins];
    let mut correct_counts = vec![0usize; n_bins];
    for r in records {
        let b = bin_of(r.confidence.norm, n_bins) - 1;
        counts[b] += 1;
        conf_sums[b] += r.confidence.norm;
        correct_counts[b] += usize::from(r.correct);
    }

    let n = records.len() as f64;
    let mut ece = 0.0;
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let weight = counts[b] as f64 / n;
        let mean_conf = conf_sums[b] / counts[b] as f64;
        let acc = correct_counts[b] as f64 / counts[b] as f64;
        ece += weight * (acc - mean_conf).abs();
    }
    Ok(ece)
}

/// Per-bin diagnostic table. Counts always sum to the record count; empty
/// bins carry zero mean and accuracy.
pub fn reliability_bins(
    records: &[PredictionRecord],
    n_bins: usize,
) -> Result<Vec<ReliabilityBin>, CalibrationError> {
    if records.is_empty() || n_bins == 0 {
        return Err(CalibrationError::EmptyInput);
    }
    check_confidences(records)?;

    let mut bins: Vec<ReliabilityBin> = (1..=n_bins)
        .map(|b| ReliabilityBin {
            lower: (b - 1) as f64 / n_bins as f64,
            upper: b as f64 / n_bins as f64,
            count: 0,
            mean_confidence: 0.0,
            empirical_accuracy: 0.0,
        })
        .collect();

    let mut conf_sums = vec![0.0f64; n_bins];
    let mut correct_counts = vec![0usize; n_bins];
    for r in records {
        let b = bin_of(r.confidence.norm, n_bins) - 1;
        bins[b].count += 1;
        conf_sums[b] += r.confidence.norm;
        correct_counts[b] += usize::from(r.correct);
    }
    for b in 0..n_bins {
        if bins[b].count > 0 {
            bins[b].mean_confidence = conf_sums[b] / bins[b].count as f64;
            bins[b].empirical_accuracy = correct_counts[b] as f64 / bins[b].count as f64;
        }
    }
    Ok(bins)
}

/// Maps a raw 0-10 score to [0,1].
pub fn normalize_confidence(raw: f64) -> Result<f64, CalibrationError> {
    if !(0.0..=10.0).contains(&raw) || raw.is_nan() {
        return Err(CalibrationError::OutOfRangeScore(raw));
    }
    Ok(raw / 10.0)
}
