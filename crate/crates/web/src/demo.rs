//! Plain-Rust logic behind the browser bindings; everything returns JSON text
//! or numbers so it can be tested natively.

use serde::{Deserialize, Serialize};

use dost_core::data::{self, NoiseMode};
use dost_core::dost::{self, EpochRecord};
use dost_core::matrix::Matrix;
use dost_core::metrics::{self, CorrectionRecord};
use dost_core::model::{CorrectionMode, TrainConfig};
use dost_core::relax;
use dost_core::rules::{parse_rules, LabelVocabulary, RuleSet};

pub type DemoResult<T> = Result<T, String>;

fn rules_from(text: &str, labels: &str) -> DemoResult<RuleSet> {
    let names: Vec<&str> = labels
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let vocab = if names.is_empty() {
        None
    } else {
        Some(LabelVocabulary::new(names).map_err(|e| e.to_string())?)
    };
    parse_rules(text, vocab.as_ref()).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RuleView {
    text: String,
    line: usize,
    weight: f64,
    penalty: f64,
    grad: Vec<f64>,
    violated: bool,
}

#[derive(Serialize)]
struct Inspection {
    labels: Vec<String>,
    rules: Vec<RuleView>,
    domain_loss: f64,
    domain_grad: Vec<f64>,
}

/// Per-rule relaxed penalty and gradient at `probs`, plus the crisp verdict
/// for `probs` thresholded at 0.5.
pub fn inspect(rules_text: &str, labels: &str, probs: &[f64]) -> DemoResult<String> {
    let rs = rules_from(rules_text, labels)?;
    let l = rs.num_labels();
    if probs.len() != l {
        return Err(format!("expected {l} probabilities, got {}", probs.len()));
    }
    let crisp: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let violated = rs.violated_rules(&crisp).map_err(|e| e.to_string())?;
    let mut views = Vec::with_capacity(rs.len());
    for (i, rule) in rs.rules().iter().enumerate() {
        let pen = relax::rule_penalty(rule, probs).map_err(|e| e.to_string())?;
        views.push(RuleView {
            text: rs.format_rule(i),
            line: rule.source().map_or(0, |s| s.line),
            weight: rule.weight(),
            penalty: pen.value,
            grad: pen.grad,
            violated: violated.contains(&i),
        });
    }
    let batch = Matrix::from_vec(1, l, probs.to_vec()).map_err(|e| e.to_string())?;
    let domain_loss = relax::domain_loss(&rs, &batch).map_err(|e| e.to_string())?;
    let domain_grad = relax::domain_loss_grad(&rs, &batch)
        .map_err(|e| e.to_string())?
        .into_vec();
    serde_json::to_string(&Inspection {
        labels: rs.vocabulary().names().to_vec(),
        rules: views,
        domain_loss,
        domain_grad,
    })
    .map_err(|e| e.to_string())
}

/// Domain loss over a `resolution × resolution` grid of `(p[x_label], p[y_label])`
/// in `[0, 1]²`, other labels held at `base`. Row-major with `p[y_label]`
/// increasing down the rows.
pub fn penalty_surface(
    rules_text: &str,
    labels: &str,
    x_label: &str,
    y_label: &str,
    base: &[f64],
    resolution: usize,
) -> DemoResult<Vec<f64>> {
    let rs = rules_from(rules_text, labels)?;
    let vocab = rs.vocabulary();
    let find = |name: &str| {
        vocab
            .position(name)
            .ok_or_else(|| format!("unknown label `{name}`"))
    };
    let (xi, yi) = (find(x_label)?, find(y_label)?);
    if base.len() != vocab.len() {
        return Err(format!("expected {} base probabilities", vocab.len()));
    }
    if resolution < 2 {
        return Err("resolution must be at least 2".into());
    }
    let step = 1.0 / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    let mut point = Matrix::from_vec(1, vocab.len(), base.to_vec()).map_err(|e| e.to_string())?;
    for r in 0..resolution {
        for c in 0..resolution {
            point[(0, xi)] = c as f64 * step;
            point[(0, yi)] = r as f64 * step;
            out.push(relax::domain_loss(&rs, &point).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub rules: String,
    pub labels: String,
    pub samples: usize,
    pub features: usize,
    pub patterns: usize,
    pub rho: f64,
    pub noise_mode: NoiseMode,
    pub lambda: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            rules: "MUTEX(A, B)\nA => C\nD => !C\n".into(),
            labels: "A,B,C,D,E".into(),
            samples: 1000,
            features: 8,
            patterns: 6,
            rho: 0.2,
            noise_mode: NoiseMode::Violating,
            lambda: 1.0,
            epochs: 60,
            warmup_epochs: 15,
            tau: 0.9,
            learning_rate: 0.05,
            hidden_units: 16,
            batch_size: 32,
            seed: 7,
        }
    }
}

#[derive(Serialize)]
struct ArmResult {
    name: &'static str,
    macro_f1: f64,
    micro_f1: f64,
    cvr: f64,
    history: Vec<EpochRecord>,
    correction: CorrectionRecord,
}

#[derive(Serialize)]
struct ExperimentResult {
    noisy_fraction: f64,
    flipped_bits: usize,
    arms: Vec<ArmResult>,
}

/// Synthesises data, injects noise, and trains a plain baseline alongside the
/// rule-obedient self-correcting run. `spec_json` may omit any field.
pub fn run_experiment(spec_json: &str) -> DemoResult<String> {
    let spec: ExperimentSpec = if spec_json.trim().is_empty() {
        ExperimentSpec::default()
    } else {
        serde_json::from_str(spec_json).map_err(|e| e.to_string())?
    };
    let rs = rules_from(&spec.rules, &spec.labels)?;
    let clean = data::synthesize(spec.seed, spec.samples, spec.features, &rs, spec.patterns)
        .map_err(|e| e.to_string())?;
    let noisy = data::inject_noise(&clean, spec.rho, spec.seed, spec.noise_mode, &rs)
        .map_err(|e| e.to_string())?;
    let audit = data::audit(&noisy, &rs).map_err(|e| e.to_string())?;

    let base = TrainConfig {
        learning_rate: spec.learning_rate,
        epochs: spec.epochs,
        batch_size: spec.batch_size,
        lambda: 0.0,
        warmup_epochs: spec.warmup_epochs,
        tau: spec.tau,
        hidden_units: spec.hidden_units,
        seed: spec.seed,
        correction_mode: CorrectionMode::Off,
    };
    let arms = [
        ("baseline", base.clone()),
        (
            "dost",
            TrainConfig {
                lambda: spec.lambda,
                correction_mode: CorrectionMode::Relabel,
                ..base
            },
        ),
    ];
    let mut results = Vec::new();
    for (name, cfg) in arms {
        let out = dost::train(&noisy, &rs, &cfg).map_err(|e| e.to_string())?;
        let m = dost::evaluate(&out.params, &noisy, &rs, 0.5).map_err(|e| e.to_string())?;
        results.push(ArmResult {
            name,
            macro_f1: m.macro_f1,
            micro_f1: m.micro_f1,
            cvr: m.cvr,
            history: out.history.epochs,
            correction: metrics::correction_report(&out.state, &noisy)
                .map_err(|e| e.to_string())?,
        });
    }
    serde_json::to_string(&ExperimentResult {
        noisy_fraction: audit.fraction,
        flipped_bits: noisy.flips.as_ref().map_or(0, Vec::len),
        arms: results,
    })
    .map_err(|e| e.to_string())
}
