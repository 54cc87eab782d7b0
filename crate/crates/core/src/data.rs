//! Datasets: JSONL storage, rule-consistent synthetic generation, label-noise
//! injection and rule audits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::matrix::{ensure_binary, LabelMatrix, Matrix};
use crate::rng::{self, DOMAIN_NOISE, DOMAIN_PATTERNS, DOMAIN_SAMPLES};
use crate::rules::{LabelVocabulary, RuleSet};

/// Standard deviation of the isotropic noise around each synthetic centroid.
pub const CLUSTER_SIGMA: f64 = 0.3;
/// Rejection budget per requested pattern.
pub const REJECTIONS_PER_PATTERN: usize = 10_000;
/// Largest label count `synthesize` accepts.
pub const MAX_SYNTH_LABELS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix<f64>,
    pub y: LabelMatrix,
    pub labels: LabelVocabulary,
    /// Pre-noise labels; present exactly when `flips` is.
    pub clean_y: Option<LabelMatrix>,
    /// `(sample, label)` positions where `y` differs from `clean_y`, row-major order.
    pub flips: Option<Vec<(usize, usize)>>,
}

impl Dataset {
    pub fn new(x: Matrix<f64>, y: LabelMatrix, labels: LabelVocabulary) -> Result<Self> {
        let ds = Self {
            x,
            y,
            labels,
            clean_y: None,
            flips: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Attaches a clean-label record; flips are derived from the difference.
    pub fn with_clean_labels(mut self, clean_y: LabelMatrix) -> Result<Self> {
        clean_y.expect_shape("clean label matrix", self.y.rows(), self.y.cols())?;
        ensure_binary(&clean_y, "clean labels")?;
        self.flips = Some(diff_positions(&self.y, &clean_y));
        self.clean_y = Some(clean_y);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.y.cols()
    }

    /// Labels that evaluation should compare against: clean when recorded.
    pub fn eval_labels(&self) -> &LabelMatrix {
        self.clean_y.as_ref().unwrap_or(&self.y)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.rows() != self.x.rows() {
            return Err(Error::shape(
                "label matrix rows",
                self.x.rows(),
                self.y.rows(),
            ));
        }
        if self.y.cols() != self.labels.len() {
            return Err(Error::shape(
                "label matrix columns",
                self.labels.len(),
                self.y.cols(),
            ));
        }
        if self.x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset {
                line: None,
                message: "features must be finite".into(),
            });
        }
        ensure_binary(&self.y, "labels")?;
        match (&self.clean_y, &self.flips) {
            (None, None) => Ok(()),
            (Some(clean), Some(flips)) => {
                clean.expect_shape("clean label matrix", self.y.rows(), self.y.cols())?;
                ensure_binary(clean, "clean labels")?;
                if *flips != diff_positions(&self.y, clean) {
                    return Err(Error::Dataset {
                        line: None,
                        message: "flip record does not match the label difference".into(),
                    });
                }
                Ok(())
            }
            _ => Err(Error::Dataset {
                line: None,
                message: "clean labels and flip record must be present together".into(),
            }),
        }
    }
}

fn diff_positions(a: &LabelMatrix, b: &LabelMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            if a[(i, j)] != b[(i, j)] {
                out.push((i, j));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// JSONL

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    x: Vec<f64>,
    y: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_clean: Option<Vec<u8>>,
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_dataset(ds, &mut out).map_err(|e| match e {
        Error::Json(e) if e.is_io() => Error::io(path, e.into()),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(ds: &Dataset, out: &mut W) -> Result<()> {
    let header = Header {
        labels: ds.labels.names().to_vec(),
    };
    let mut lines = vec![json::to_string(&header)?];
    for i in 0..ds.len() {
        let row = Row {
            x: ds.x.row(i).to_vec(),
            y: ds.y.row(i).to_vec(),
            y_clean: ds.clean_y.as_ref().map(|c| c.row(i).to_vec()),
        };
        lines.push(json::to_string(&row)?);
    }
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::Json(serde_json::Error::io(e)))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file)).map_err(|e| match e {
        Error::Json(e) if e.is_io() => Error::io(path, e.into()),
        other => other,
    })
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Dataset {
        line: Some(line),
        message,
    };
    let mut header: Option<LabelVocabulary> = None;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<u8> = Vec::new();
    let mut clean: Vec<u8> = Vec::new();
    let mut has_clean: Option<bool> = None;
    let mut dim: Option<usize> = None;
    let mut n = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Json(serde_json::Error::io(e)))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(labels) = &header else {
            let h: Header = serde_json::from_str(line)
                .map_err(|_| err(line_no, "missing label header".into()))?;
            header = Some(LabelVocabulary::new(h.labels).map_err(|e| err(line_no, e.to_string()))?);
            continue;
        };
        let row: Row =
            serde_json::from_str(line).map_err(|e| err(line_no, format!("malformed row: {e}")))?;
        let d = *dim.get_or_insert(row.x.len());
        if row.x.len() != d {
            return Err(err(
                line_no,
                format!("expected {d} features, found {}", row.x.len()),
            ));
        }
        if row.x.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "features must be finite".into()));
        }
        if row.y.len() != labels.len() {
            return Err(err(
                line_no,
                format!("expected {} labels, found {}", labels.len(), row.y.len()),
            ));
        }
        if row.y.iter().any(|&v| v > 1) {
            return Err(err(line_no, "labels must be 0 or 1".into()));
        }
        match (
            *has_clean.get_or_insert(row.y_clean.is_some()),
            &row.y_clean,
        ) {
            (true, Some(c)) => {
                if c.len() != labels.len() || c.iter().any(|&v| v > 1) {
                    return Err(err(
                        line_no,
                        "y_clean must be a binary vector of label length".into(),
                    ));
                }
                clean.extend_from_slice(c);
            }
            (false, None) => {}
            _ => {
                return Err(err(
                    line_no,
                    "y_clean must be present on every row or on none".into(),
                ))
            }
        }
        xs.extend_from_slice(&row.x);
        ys.extend_from_slice(&row.y);
        n += 1;
    }

    let labels = header.ok_or_else(|| Error::Dataset {
        line: None,
        message: "missing label header".into(),
    })?;
    if n == 0 {
        return Err(Error::Dataset {
            line: None,
            message: "dataset has no samples".into(),
        });
    }
    let l = labels.len();
    let x = Matrix::from_vec(n, dim.unwrap_or(0), xs)?;
    let y = Matrix::from_vec(n, l, ys)?;
    let ds = Dataset::new(x, y, labels)?;
    if has_clean == Some(true) {
        return ds.with_clean_labels(Matrix::from_vec(n, l, clean)?);
    }
    Ok(ds)
}

// ---------------------------------------------------------------------------
// synthesis and noise

/// Rule-consistent clustered data: `patterns` distinct consistent label
/// vectors, each with a centroid in `[-1, 1]^dims`; samples are a uniformly
/// chosen pattern plus Gaussian feature noise.
pub fn synthesize(
    seed: u64,
    n: usize,
    dims: usize,
    rs: &RuleSet,
    patterns: usize,
) -> Result<Dataset> {
    let l = rs.num_labels();
    if patterns < 2 {
        return Err(Error::Synthesis(
            "at least two label patterns are required".into(),
        ));
    }
    if l > MAX_SYNTH_LABELS {
        return Err(Error::Synthesis(format!(
            "{l} labels exceeds the rejection-sampling limit of {MAX_SYNTH_LABELS}"
        )));
    }
    if n == 0 || dims == 0 {
        return Err(Error::Synthesis(
            "sample count and feature dimension must be positive".into(),
        ));
    }
    if l < 63 && (patterns as u64) > (1u64 << l) {
        return Err(Error::Synthesis(format!(
            "{patterns} distinct patterns requested but only {} label vectors exist",
            1u64 << l
        )));
    }

    let mut rng = rng::stream(seed, DOMAIN_PATTERNS, 0);
    let budget = REJECTIONS_PER_PATTERN * patterns;
    let mut rejections = 0usize;
    let mut chosen: Vec<Vec<u8>> = Vec::with_capacity(patterns);
    let mut seen = HashSet::new();
    while chosen.len() < patterns {
        let candidate: Vec<u8> = (0..l).map(|_| rng.random_range(0..=1u8)).collect();
        if seen.contains(&candidate) || !rs.violated_unchecked(&candidate).is_empty() {
            rejections += 1;
            if rejections > budget {
                return Err(Error::Synthesis(format!(
                    "found only {} of {patterns} distinct rule-consistent label vectors within {budget} rejections",
                    chosen.len()
                )));
            }
            continue;
        }
        seen.insert(candidate.clone());
        chosen.push(candidate);
    }
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("finite bounds");
    let centroids: Vec<Vec<f64>> = (0..patterns)
        .map(|_| (0..dims).map(|_| unit.sample(&mut rng)).collect())
        .collect();

    let noise = Normal::new(0.0, CLUSTER_SIGMA).expect("positive sigma");
    let mut x = Matrix::filled(n, dims, 0.0);
    let mut y = Matrix::filled(n, l, 0u8);
    for i in 0..n {
        let mut srng = rng::stream(seed, DOMAIN_SAMPLES, i as u64);
        let k = srng.random_range(0..patterns);
        for (out, c) in x.row_mut(i).iter_mut().zip(&centroids[k]) {
            *out = c + noise.sample(&mut srng);
        }
        y.row_mut(i).copy_from_slice(&chosen[k]);
    }
    let clean = y.clone();
    Dataset::new(x, y, rs.vocabulary().clone())?.with_clean_labels(clean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Every bit flips independently with probability rho.
    Uniform,
    /// With probability rho per sample, one flip that creates a new rule violation.
    Violating,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "violating" => Ok(Self::Violating),
            other => Err(Error::InvalidConfig(format!(
                "unknown noise mode `{other}` (expected uniform or violating)"
            ))),
        }
    }
}

/// Flips supervision bits and records the clean labels.
///
/// `rs` is only consulted in [`NoiseMode::Violating`] and must be indexed
/// against the dataset's labels.
pub fn inject_noise(
    ds: &Dataset,
    rho: f64,
    seed: u64,
    mode: NoiseMode,
    rs: &RuleSet,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "noise rate {rho} is outside [0, 1]"
        )));
    }
    if ds.flips.as_ref().is_some_and(|f| !f.is_empty()) {
        return Err(Error::PriorNoise);
    }
    if mode == NoiseMode::Violating && rs.vocabulary() != &ds.labels {
        return Err(Error::VocabularyMismatch(
            "noise rules must be indexed against the dataset labels".into(),
        ));
    }
    let clean = ds.y.clone();
    let mut y = ds.y.clone();
    for i in 0..ds.len() {
        let mut srng = rng::stream(seed, DOMAIN_NOISE, i as u64);
        let row = y.row_mut(i);
        match mode {
            NoiseMode::Uniform => {
                for bit in row.iter_mut() {
                    if srng.random_bool(rho) {
                        *bit ^= 1;
                    }
                }
            }
            NoiseMode::Violating => {
                if !srng.random_bool(rho) {
                    continue;
                }
                let before: HashSet<usize> = rs.violated_unchecked(row).into_iter().collect();
                let mut candidates = Vec::new();
                for j in 0..row.len() {
                    row[j] ^= 1;
                    if rs
                        .violated_unchecked(row)
                        .iter()
                        .any(|r| !before.contains(r))
                    {
                        candidates.push(j);
                    }
                    row[j] ^= 1;
                }
                if let Some(&j) = candidates.choose(&mut srng) {
                    row[j] ^= 1;
                }
            }
        }
    }
    let mut out = Dataset::new(ds.x.clone(), y, ds.labels.clone())?;
    out = out.with_clean_labels(clean)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// audit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCount {
    pub rule: usize,
    pub text: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleViolations {
    pub sample: usize,
    pub rules: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub per_rule: Vec<RuleCount>,
    /// Number of samples violating at least one rule.
    pub violating_samples: usize,
    pub fraction: f64,
    pub per_sample: Vec<SampleViolations>,
}

/// Maximum number of per-sample lines in the text rendering.
pub const AUDIT_TEXT_SAMPLE_CAP: usize = 100;

impl AuditReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let total = self.per_sample.len();
        let _ = writeln!(
            out,
            "violating samples: {} ({:.4})",
            self.violating_samples, self.fraction
        );
        for r in &self.per_rule {
            let _ = writeln!(out, "rule {:>3}: {:>6}  {}", r.rule, r.count, r.text);
        }
        for s in self.per_sample.iter().take(AUDIT_TEXT_SAMPLE_CAP) {
            let rules: Vec<String> = s.rules.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(out, "sample {}: rules {}", s.sample, rules.join(","));
        }
        if total > AUDIT_TEXT_SAMPLE_CAP {
            let _ = writeln!(
                out,
                "... {} more violating samples",
                total - AUDIT_TEXT_SAMPLE_CAP
            );
        }
        out
    }
}

/// Counts hard rule violations of the dataset's given labels. Rule labels are
/// matched to dataset columns by name.
pub fn audit(ds: &Dataset, rs: &RuleSet) -> Result<AuditReport> {
    let aligned = rs.reindex(&ds.labels)?;
    let mut counts = vec![0usize; aligned.len()];
    let mut per_sample = Vec::new();
    for (i, y) in ds.y.iter_rows().enumerate() {
        let violated = aligned.violated_unchecked(y);
        for &r in &violated {
            counts[r] += 1;
        }
        if !violated.is_empty() {
            per_sample.push(SampleViolations {
                sample: i,
                rules: violated,
            });
        }
    }
    let violating_samples = per_sample.len();
    Ok(AuditReport {
        per_rule: counts
            .into_iter()
            .enumerate()
            .map(|(rule, count)| RuleCount {
                rule,
                text: rs.format_rule(rule),
                count,
            })
            .collect(),
        violating_samples,
        fraction: if ds.is_empty() {
            0.0
        } else {
            violating_samples as f64 / ds.len() as f64
        },
        per_sample,
    })
}
