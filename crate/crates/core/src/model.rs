//! One-hidden-layer multi-label classifier with sigmoid outputs, the composite
//! objective `masked BCE + λ · domain loss`, and its exact gradients.

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{LabelMatrix, Matrix};
use crate::relax;
use crate::rng::{self, DOMAIN_INIT};
use crate::rules::RuleSet;

/// Lower/upper clamp applied to probabilities inside the BCE logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub inputs: usize,
    pub hidden: usize,
    pub labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// hidden × inputs
    pub w1: Matrix<f64>,
    pub b1: Vec<f64>,
    /// labels × hidden
    pub w2: Matrix<f64>,
    pub b2: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            w1: Matrix::filled(dims.hidden, dims.inputs, 0.0),
            b1: vec![0.0; dims.hidden],
            w2: Matrix::filled(dims.labels, dims.hidden, 0.0),
            b2: vec![0.0; dims.labels],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            inputs: self.w1.cols(),
            hidden: self.w1.rows(),
            labels: self.w2.rows(),
        }
    }

    /// Every parameter in a fixed order: W1, b1, W2, b2 (row-major).
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .as_slice()
            .iter()
            .chain(&self.b1)
            .chain(self.w2.as_slice())
            .chain(&self.b2)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .as_mut_slice()
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.as_mut_slice().iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d.hidden * d.inputs + d.hidden + d.labels * d.hidden + d.labels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let d = self.dims();
        if self.b1.len() != d.hidden || self.b2.len() != d.labels || self.w2.cols() != d.hidden {
            return Err(Error::shape(
                "model parameters",
                format!("{}-{}-{} network", d.inputs, d.hidden, d.labels),
                "inconsistent tensors",
            ));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "model parameters must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Which supervision bits the training loop is allowed to touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Plain supervised training on the given labels.
    Off,
    /// Flagged bits are excluded from the BCE term for the whole run.
    MaskOnly,
    /// Flagged bits are excluded, then replaced by confident predictions.
    Relabel,
}

impl std::str::FromStr for CorrectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "mask_only" => Ok(Self::MaskOnly),
            "relabel" => Ok(Self::Relabel),
            other => Err(Error::InvalidConfig(format!(
                "unknown correction mode `{other}` (expected off, mask_only or relabel)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub warmup_epochs: usize,
    pub tau: f64,
    pub hidden_units: usize,
    pub seed: u64,
    pub correction_mode: CorrectionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 32,
            lambda: 1.0,
            warmup_epochs: 15,
            tau: 0.9,
            hidden_units: 16,
            seed: 0,
            correction_mode: CorrectionMode::Relabel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be non-negative");
        }
        if self.warmup_epochs > self.epochs {
            return fail("warmup_epochs must not exceed epochs");
        }
        if !(self.tau > 0.5 && self.tau < 1.0) {
            return fail("tau must lie in (0.5, 1)");
        }
        if self.hidden_units == 0 {
            return fail("hidden_units must be at least 1");
        }
        Ok(())
    }
}

/// Weights uniform in ±1/√fan_in (W1 row-major, then W2 row-major), biases zero.
pub fn init_params(seed: u64, inputs: usize, hidden: usize, labels: usize) -> Result<ModelParams> {
    if inputs == 0 || hidden == 0 || labels == 0 {
        return Err(Error::InvalidConfig(format!(
            "network dimensions must be positive, got {inputs}-{hidden}-{labels}"
        )));
    }
    let mut rng = rng::stream(seed, DOMAIN_INIT, 0);
    let mut params = ModelParams::zeros(Dims {
        inputs,
        hidden,
        labels,
    });
    let b1 = 1.0 / (inputs as f64).sqrt();
    let u1 = Uniform::new_inclusive(-b1, b1).expect("finite bound");
    for w in params.w1.as_mut_slice() {
        *w = u1.sample(&mut rng);
    }
    let b2 = 1.0 / (hidden as f64).sqrt();
    let u2 = Uniform::new_inclusive(-b2, b2).expect("finite bound");
    for w in params.w2.as_mut_slice() {
        *w = u2.sample(&mut rng);
    }
    Ok(params)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Matrix<f64>,
}

/// `P = sigmoid(tanh(X·W1ᵀ + b1)·W2ᵀ + b2)`.
pub fn forward(params: &ModelParams, x: &Matrix<f64>) -> Result<(Matrix<f64>, ForwardCache)> {
    let d = params.dims();
    if x.cols() != d.inputs {
        return Err(Error::shape("feature matrix columns", d.inputs, x.cols()));
    }
    Ok(forward_unchecked(params, x))
}

fn forward_unchecked(params: &ModelParams, x: &Matrix<f64>) -> (Matrix<f64>, ForwardCache) {
    let d = params.dims();
    let n = x.rows();
    let mut hidden = Matrix::filled(n, d.hidden, 0.0);
    let mut probs = Matrix::filled(n, d.labels, 0.0);
    for i in 0..n {
        let xi = x.row(i);
        let hi = hidden.row_mut(i);
        for (h, out) in hi.iter_mut().enumerate() {
            let z = params.b1[h] + dot(params.w1.row(h), xi);
            *out = z.tanh();
        }
        let hi = hidden.row(i);
        for (l, out) in probs.row_mut(i).iter_mut().enumerate() {
            *out = sigmoid(params.b2[l] + dot(params.w2.row(l), hi));
        }
    }
    (probs, ForwardCache { hidden })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_supervision(probs: &Matrix<f64>, targets: &Matrix<f64>, mask: &LabelMatrix) -> Result<()> {
    targets.expect_shape("target matrix", probs.rows(), probs.cols())?;
    mask.expect_shape("mask matrix", probs.rows(), probs.cols())?;
    if targets.as_slice().iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidConfig("targets must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over the entries with mask bit 1.
pub fn bce_masked(probs: &Matrix<f64>, targets: &Matrix<f64>, mask: &LabelMatrix) -> Result<f64> {
    check_supervision(probs, targets, mask)?;
    bce_value(probs, targets, mask).ok_or(Error::NoSupervision)
}

fn bce_value(probs: &Matrix<f64>, targets: &Matrix<f64>, mask: &LabelMatrix) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((&p, &t), &m) in probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .zip(mask.as_slice())
    {
        if m == 0 {
            continue;
        }
        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        sum -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone)]
pub struct LossAndGrads {
    /// `bce + lambda · domain`
    pub loss: f64,
    pub bce: f64,
    pub domain: f64,
    pub grads: ModelParams,
}

/// Composite loss on one batch and its exact gradient with respect to every parameter.
pub fn total_loss_and_grads(
    params: &ModelParams,
    x: &Matrix<f64>,
    targets: &Matrix<f64>,
    mask: &LabelMatrix,
    rs: &RuleSet,
    lambda: f64,
) -> Result<LossAndGrads> {
    let out = composite(params, x, targets, mask, rs, lambda)?;
    if out.supervised == 0 {
        return Err(Error::NoSupervision);
    }
    Ok(out.inner)
}

pub(crate) struct Composite {
    pub inner: LossAndGrads,
    pub supervised: usize,
}

/// Like [`total_loss_and_grads`], but a batch with every entry masked
/// contributes a zero BCE term instead of failing.
pub(crate) fn composite(
    params: &ModelParams,
    x: &Matrix<f64>,
    targets: &Matrix<f64>,
    mask: &LabelMatrix,
    rs: &RuleSet,
    lambda: f64,
) -> Result<Composite> {
    params.validate()?;
    let d = params.dims();
    if x.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig("lambda must be non-negative".into()));
    }
    if rs.num_labels() != d.labels {
        return Err(Error::shape(
            "rule vocabulary size",
            d.labels,
            rs.num_labels(),
        ));
    }
    let (probs, cache) = forward(params, x)?;
    check_supervision(&probs, targets, mask)?;

    let supervised = mask.as_slice().iter().filter(|&&m| m != 0).count();
    let bce = bce_value(&probs, targets, mask).unwrap_or(0.0);
    let domain = relax::domain_loss_unchecked(rs, &probs);
    let domain_grad =
        (lambda > 0.0 && !rs.is_empty()).then(|| relax::domain_loss_grad_unchecked(rs, &probs));

    // gradient w.r.t. the output pre-activations
    let n = x.rows();
    let mut dz = Matrix::filled(n, d.labels, 0.0);
    for i in 0..n {
        for l in 0..d.labels {
            let p = probs[(i, l)];
            let mut g = 0.0;
            if mask[(i, l)] != 0 && p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                g = (p - targets[(i, l)]) / supervised as f64;
            }
            if let Some(dg) = &domain_grad {
                g += lambda * dg[(i, l)] * p * (1.0 - p);
            }
            dz[(i, l)] = g;
        }
    }

    let mut grads = ModelParams::zeros(d);
    let mut da = Matrix::filled(n, d.hidden, 0.0);
    for i in 0..n {
        let hi = cache.hidden.row(i);
        let dzi = dz.row(i);
        for (l, &g) in dzi.iter().enumerate() {
            grads.b2[l] += g;
            for (w, &h) in grads.w2.row_mut(l).iter_mut().zip(hi) {
                *w += g * h;
            }
        }
        for h in 0..d.hidden {
            let back: f64 = (0..d.labels).map(|l| dzi[l] * params.w2[(l, h)]).sum();
            da[(i, h)] = back * (1.0 - hi[h] * hi[h]);
        }
    }
    for i in 0..n {
        let xi = x.row(i);
        for h in 0..d.hidden {
            let g = da[(i, h)];
            grads.b1[h] += g;
            for (w, &xv) in grads.w1.row_mut(h).iter_mut().zip(xi) {
                *w += g * xv;
            }
        }
    }

    Ok(Composite {
        inner: LossAndGrads {
            loss: bce + lambda * domain,
            bce,
            domain,
            grads,
        },
        supervised,
    })
}

/// `θ ← θ − lr · g` for every parameter.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, learning_rate: f64) -> ModelParams {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grads, learning_rate);
    next
}

pub fn sgd_step_in_place(params: &mut ModelParams, grads: &ModelParams, learning_rate: f64) {
    debug_assert_eq!(params.dims(), grads.dims());
    for (p, g) in params.values_mut().zip(grads.values()) {
        *p -= learning_rate * g;
    }
}

/// Model file: dimensions, seed, row-major tensors and the training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub dims: Dims,
    pub seed: u64,
    #[serde(rename = "W1")]
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        Self {
            dims: params.dims(),
            seed: config.seed,
            w1: params.w1.as_slice().to_vec(),
            b1: params.b1.clone(),
            w2: params.w2.as_slice().to_vec(),
            b2: params.b2.clone(),
            config: config.clone(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let d = self.dims;
        let params = ModelParams {
            w1: Matrix::from_vec(d.hidden, d.inputs, self.w1.clone())?,
            b1: self.b1.clone(),
            w2: Matrix::from_vec(d.labels, d.hidden, self.w2.clone())?,
            b2: self.b2.clone(),
        };
        params.validate()?;
        Ok(params)
    }
}
