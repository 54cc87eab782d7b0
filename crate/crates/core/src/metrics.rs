//! Prediction quality (F1 family, exact match), rule obedience (CVR) and
//! label-correction quality.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dost::{Origin, SupervisionState};
use crate::error::{Error, Result};
use crate::matrix::LabelMatrix;
use crate::rules::RuleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Positives in the reference labels.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub per_label: Vec<LabelScore>,
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTarget {
    Clean,
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub n_flipped: usize,
    pub n_corrected_right: usize,
    pub n_corrected_wrong: usize,
    pub n_still_masked: usize,
    /// Flipped bits that were never flagged.
    pub n_undetected: usize,
    /// `n_corrected_right / n_flipped`; `None` without flips.
    pub recovery_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: Vec<LabelScore>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub exact_match: f64,
    pub cvr: f64,
    pub correction: Option<CorrectionRecord>,
    pub eval_target: EvalTarget,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Per-label, macro and micro F1. `names` labels the columns.
pub fn f1_scores(
    pred: &LabelMatrix,
    reference: &LabelMatrix,
    names: &[String],
) -> Result<F1Scores> {
    pred.expect_shape("prediction matrix", reference.rows(), reference.cols())?;
    if names.len() != reference.cols() {
        return Err(Error::shape("label names", reference.cols(), names.len()));
    }
    let l = reference.cols();
    let (mut tp, mut fp, mut fn_) = (vec![0usize; l], vec![0usize; l], vec![0usize; l]);
    for (p, r) in pred.iter_rows().zip(reference.iter_rows()) {
        for j in 0..l {
            match (p[j] == 1, r[j] == 1) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fn_[j] += 1,
                (false, false) => {}
            }
        }
    }
    let per_label: Vec<LabelScore> = (0..l)
        .map(|j| {
            let (precision, recall, f1) = f1_from_counts(tp[j], fp[j], fn_[j]);
            LabelScore {
                label: names[j].clone(),
                precision,
                recall,
                f1,
                support: tp[j] + fn_[j],
            }
        })
        .collect();
    let macro_f1 = if l == 0 {
        0.0
    } else {
        per_label.iter().map(|s| s.f1).sum::<f64>() / l as f64
    };
    let (_, _, micro_f1) = f1_from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok(F1Scores {
        per_label,
        macro_f1,
        micro_f1,
    })
}

/// Fraction of (sample, rule) pairs with a hard violation; 0 without rules.
pub fn cvr(pred: &LabelMatrix, rs: &RuleSet) -> Result<f64> {
    if rs.is_empty() || pred.rows() == 0 {
        return Ok(0.0);
    }
    let mut violations = 0usize;
    for y in pred.iter_rows() {
        violations += rs.violated_rules(y)?.len();
    }
    Ok(violations as f64 / (pred.rows() * rs.len()) as f64)
}

pub fn exact_match(pred: &LabelMatrix, reference: &LabelMatrix) -> Result<f64> {
    pred.expect_shape("prediction matrix", reference.rows(), reference.cols())?;
    let hits = pred
        .iter_rows()
        .zip(reference.iter_rows())
        .filter(|(p, r)| p == r)
        .count();
    Ok(ratio(hits, pred.rows()))
}

/// Classifies every injected flip by what self-supervision did with it.
pub fn correction_report(state: &SupervisionState, ds: &Dataset) -> Result<CorrectionRecord> {
    let (flips, clean) = match (&ds.flips, &ds.clean_y) {
        (Some(f), Some(c)) => (f, c),
        _ => return Err(Error::MissingFlips),
    };
    state
        .origin
        .expect_shape("supervision state", ds.len(), ds.num_labels())?;
    let mut rec = CorrectionRecord {
        n_flipped: flips.len(),
        n_corrected_right: 0,
        n_corrected_wrong: 0,
        n_still_masked: 0,
        n_undetected: 0,
        recovery_rate: None,
    };
    for &(i, j) in flips {
        match state.origin[(i, j)] {
            Origin::SelfCorrected if state.targets[(i, j)] == f64::from(clean[(i, j)]) => {
                rec.n_corrected_right += 1
            }
            Origin::SelfCorrected => rec.n_corrected_wrong += 1,
            Origin::Masked => rec.n_still_masked += 1,
            Origin::Given => rec.n_undetected += 1,
        }
    }
    if rec.n_flipped > 0 {
        rec.recovery_rate = Some(rec.n_corrected_right as f64 / rec.n_flipped as f64);
    }
    Ok(rec)
}
