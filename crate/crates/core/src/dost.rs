//! The domain-obedient self-supervised training schedule.
//!
//! 1. Flag every label bit that takes part in a rule its sample's given
//!    labels violate.
//! 2. Exclude flagged bits from the BCE term (warmup).
//! 3. After each epoch `e >= warmup_epochs`, replace still-masked bits whose
//!    prediction is confident (`p >= tau` or `p <= 1 - tau`) by the hard
//!    prediction. Corrections are permanent.
//!
//! Throughout, the relaxed rule penalty is added to the loss with weight λ.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::json;
use crate::matrix::{ensure_binary, LabelMatrix, Matrix};
use crate::metrics::{self, EvalTarget, MetricsReport};
use crate::model::{self, CorrectionMode, ModelParams, TrainConfig};
use crate::rng::{self, DOMAIN_SHUFFLE};
use crate::rules::RuleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Given,
    Masked,
    SelfCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionState {
    /// Current hard targets.
    pub targets: Matrix<f64>,
    /// 1 = participates in BCE.
    pub mask: LabelMatrix,
    /// Computed once from the original labels.
    pub flags: LabelMatrix,
    pub origin: Matrix<Origin>,
}

impl SupervisionState {
    pub fn masked_count(&self) -> usize {
        self.count(Origin::Masked)
    }

    pub fn corrected_count(&self) -> usize {
        self.count(Origin::SelfCorrected)
    }

    fn count(&self, origin: Origin) -> usize {
        self.origin
            .as_slice()
            .iter()
            .filter(|&&o| o == origin)
            .count()
    }
}

/// `F[i][j] = 1` iff label `j` occurs in some rule that `Y[i]` violates.
pub fn flag_inconsistent(rs: &RuleSet, y: &LabelMatrix) -> Result<LabelMatrix> {
    if y.cols() != rs.num_labels() {
        return Err(Error::shape(
            "label matrix columns",
            rs.num_labels(),
            y.cols(),
        ));
    }
    ensure_binary(y, "labels")?;
    let mut flags = Matrix::filled(y.rows(), y.cols(), 0u8);
    for (i, row) in y.iter_rows().enumerate() {
        for r in rs.violated_unchecked(row) {
            for lit in rs.rules()[r].literals() {
                flags[(i, lit.label)] = 1;
            }
        }
    }
    Ok(flags)
}

pub fn init_supervision(
    y: &LabelMatrix,
    flags: &LabelMatrix,
    mode: CorrectionMode,
) -> SupervisionState {
    let targets = y.map(|&v| f64::from(v));
    let mut mask = Matrix::filled(y.rows(), y.cols(), 1u8);
    let mut origin = Matrix::filled(y.rows(), y.cols(), Origin::Given);
    if mode != CorrectionMode::Off {
        for (k, &f) in flags.as_slice().iter().enumerate() {
            if f == 1 {
                mask.as_mut_slice()[k] = 0;
                origin.as_mut_slice()[k] = Origin::Masked;
            }
        }
    }
    SupervisionState {
        targets,
        mask,
        flags: flags.clone(),
        origin,
    }
}

/// Relabels confident masked positions; returns how many changed origin.
pub fn correct_labels(
    state: &mut SupervisionState,
    probs: &Matrix<f64>,
    tau: f64,
) -> Result<usize> {
    let (n, l) = state.origin.shape();
    probs.expect_shape("prediction matrix", n, l)?;
    if !(tau > 0.5 && tau < 1.0) {
        return Err(Error::InvalidConfig("tau must lie in (0.5, 1)".into()));
    }
    let mut corrected = 0;
    for k in 0..n * l {
        if state.origin.as_slice()[k] != Origin::Masked {
            continue;
        }
        let p = probs.as_slice()[k];
        let target = if p >= tau {
            1.0
        } else if p <= 1.0 - tau {
            0.0
        } else {
            continue;
        };
        state.targets.as_mut_slice()[k] = target;
        state.mask.as_mut_slice()[k] = 1;
        state.origin.as_mut_slice()[k] = Origin::SelfCorrected;
        corrected += 1;
    }
    Ok(corrected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bce: f64,
    pub domain_loss: f64,
    pub total: f64,
    pub masked: usize,
    pub corrected_cumulative: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let text = self.to_jsonl()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub state: SupervisionState,
}

/// Sample order for one epoch: a seeded shuffle of `0..n`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, DOMAIN_SHUFFLE, epoch as u64));
    order
}

pub fn train(data: &Dataset, rs: &RuleSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset {
            line: None,
            message: "cannot train on an empty dataset".into(),
        });
    }
    let rs = rs.reindex(&data.labels)?;
    let flags = flag_inconsistent(&rs, &data.y)?;
    let mut state = init_supervision(&data.y, &flags, cfg.correction_mode);
    let mut params = model::init_params(
        cfg.seed,
        data.num_features(),
        cfg.hidden_units,
        data.num_labels(),
    )?;
    let mut history = TrainHistory::default();
    let mut corrected_total = 0;

    for epoch in 1..=cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, data.len());
        for batch in order.chunks(cfg.batch_size) {
            let x = data.x.select_rows(batch);
            let t = state.targets.select_rows(batch);
            let m = state.mask.select_rows(batch);
            let step = model::composite(&params, &x, &t, &m, &rs, cfg.lambda)?;
            model::sgd_step_in_place(&mut params, &step.inner.grads, cfg.learning_rate);
        }

        let (probs, _) = model::forward(&params, &data.x)?;
        let full = model::composite(
            &params,
            &data.x,
            &state.targets,
            &state.mask,
            &rs,
            cfg.lambda,
        )?;
        if cfg.correction_mode == CorrectionMode::Relabel && epoch >= cfg.warmup_epochs {
            corrected_total += correct_labels(&mut state, &probs, cfg.tau)?;
        }
        history.epochs.push(EpochRecord {
            epoch,
            bce: full.inner.bce,
            domain_loss: full.inner.domain,
            total: full.inner.loss,
            masked: state.masked_count(),
            corrected_cumulative: corrected_total,
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        state,
    })
}

/// Binarises `p >= threshold` to 1.
pub fn binarize(probs: &Matrix<f64>, threshold: f64) -> LabelMatrix {
    probs.map(|&p| u8::from(p >= threshold))
}

/// Scores the model against the dataset's clean labels when recorded, else the given ones.
pub fn evaluate(
    params: &ModelParams,
    data: &Dataset,
    rs: &RuleSet,
    threshold: f64,
) -> Result<MetricsReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig("threshold must lie in (0, 1)".into()));
    }
    if params.dims().labels != data.num_labels() {
        return Err(Error::shape(
            "model outputs",
            data.num_labels(),
            params.dims().labels,
        ));
    }
    let rs = rs.reindex(&data.labels)?;
    let (probs, _) = model::forward(params, &data.x)?;
    let pred = binarize(&probs, threshold);
    let reference = data.eval_labels();
    let f1 = metrics::f1_scores(&pred, reference, data.labels.names())?;
    Ok(MetricsReport {
        per_label: f1.per_label,
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        exact_match: metrics::exact_match(&pred, reference)?,
        cvr: metrics::cvr(&pred, &rs)?,
        correction: None,
        eval_target: if data.clean_y.is_some() {
            EvalTarget::Clean
        } else {
            EvalTarget::Given
        },
    })
}
