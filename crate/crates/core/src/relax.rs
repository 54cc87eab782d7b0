//! Product-logic relaxation of rules over predicted probabilities.
//!
//! For a rule `a1 & .. & an => c1 | .. | cm` and probabilities `p`, the
//! violation degree is
//!
//! ```text
//! v(a1) · .. · v(an) · (1 − v(c1)) · .. · (1 − v(cm))
//! ```
//!
//! with `v(l) = p[l]` for a positive literal and `1 − p[l]` for a negated one.
//! At crisp `p ∈ {0,1}^L` it is exactly the indicator of a hard violation.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rules::{Literal, Rule, RuleSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyResult {
    pub value: f64,
    /// ∂value/∂p, one entry per label; zero for labels the rule does not mention.
    pub grad: Vec<f64>,
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(Error::ProbabilityOutOfRange {
            index,
            value: p[index],
        }),
        None => Ok(()),
    }
}

pub fn literal_value(lit: Literal, p: &[f64]) -> Result<f64> {
    let prob = *p
        .get(lit.label)
        .ok_or_else(|| Error::shape("probability vector", format!("> {}", lit.label), p.len()))?;
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::ProbabilityOutOfRange {
            index: lit.label,
            value: prob,
        });
    }
    Ok(literal_unchecked(lit, p))
}

#[inline]
fn literal_unchecked(lit: Literal, p: &[f64]) -> f64 {
    if lit.negated {
        1.0 - p[lit.label]
    } else {
        p[lit.label]
    }
}

/// One multiplicative factor of the penalty and its derivative w.r.t. `p[label]`.
struct Factor {
    label: usize,
    value: f64,
    slope: f64,
}

fn factors(rule: &Rule, p: &[f64]) -> Vec<Factor> {
    let sign = |l: &Literal| if l.negated { -1.0 } else { 1.0 };
    let ant = rule.antecedent().iter().map(|l| Factor {
        label: l.label,
        value: literal_unchecked(*l, p),
        slope: sign(l),
    });
    let cons = rule.consequent().iter().map(|l| Factor {
        label: l.label,
        value: 1.0 - literal_unchecked(*l, p),
        slope: -sign(l),
    });
    ant.chain(cons).collect()
}

/// Adds `scale · ∂penalty/∂p` into `grad` and returns the penalty value.
///
/// The value is the left-to-right product of the factors. Each partial uses
/// prefix/suffix products so zero factors need no division.
fn accumulate(rule: &Rule, p: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let fs = factors(rule, p);
    let k = fs.len();
    let mut prefix = vec![1.0; k + 1];
    for (i, f) in fs.iter().enumerate() {
        prefix[i + 1] = prefix[i] * f.value;
    }
    let mut suffix = 1.0;
    for i in (0..k).rev() {
        grad[fs[i].label] += scale * fs[i].slope * prefix[i] * suffix;
        suffix *= fs[i].value;
    }
    prefix[k]
}

/// Same product, same order, as [`accumulate`].
fn penalty_value(rule: &Rule, p: &[f64]) -> f64 {
    factors(rule, p).iter().fold(1.0, |acc, f| acc * f.value)
}

pub fn rule_penalty(rule: &Rule, p: &[f64]) -> Result<PenaltyResult> {
    if rule.max_label() >= p.len() {
        return Err(Error::shape(
            "probability vector",
            format!("at least {}", rule.max_label() + 1),
            p.len(),
        ));
    }
    check_probabilities(p)?;
    let mut grad = vec![0.0; p.len()];
    let value = accumulate(rule, p, 1.0, &mut grad);
    Ok(PenaltyResult { value, grad })
}

fn check_batch(rs: &RuleSet, probs: &Matrix<f64>) -> Result<()> {
    if probs.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if probs.cols() != rs.num_labels() {
        return Err(Error::shape(
            "probability matrix columns",
            rs.num_labels(),
            probs.cols(),
        ));
    }
    check_probabilities(probs.as_slice())
}

/// Mean over samples of the weight-normalised rule penalties; 0 for an empty rule set.
pub fn domain_loss(rs: &RuleSet, probs: &Matrix<f64>) -> Result<f64> {
    check_batch(rs, probs)?;
    Ok(domain_loss_unchecked(rs, probs))
}

pub(crate) fn domain_loss_unchecked(rs: &RuleSet, probs: &Matrix<f64>) -> f64 {
    if rs.is_empty() {
        return 0.0;
    }
    let total_weight = rs.total_weight();
    let sum: f64 = probs
        .iter_rows()
        .map(|p| {
            rs.rules()
                .iter()
                .map(|r| r.weight() * penalty_value(r, p))
                .sum::<f64>()
                / total_weight
        })
        .sum();
    sum / probs.rows() as f64
}

pub fn domain_loss_grad(rs: &RuleSet, probs: &Matrix<f64>) -> Result<Matrix<f64>> {
    check_batch(rs, probs)?;
    Ok(domain_loss_grad_unchecked(rs, probs))
}

pub(crate) fn domain_loss_grad_unchecked(rs: &RuleSet, probs: &Matrix<f64>) -> Matrix<f64> {
    let mut grad = Matrix::filled(probs.rows(), probs.cols(), 0.0);
    if rs.is_empty() {
        return grad;
    }
    let norm = rs.total_weight() * probs.rows() as f64;
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let g = grad.row_mut(i);
        for r in rs.rules() {
            accumulate(r, p, r.weight() / norm, g);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{parse_rules, LabelVocabulary};

    fn rule(text: &str, labels: &[&str]) -> Rule {
        let v = LabelVocabulary::new(labels.iter().copied()).unwrap();
        parse_rules(text, Some(&v)).unwrap().rules()[0].clone()
    }

    #[test]
    fn literal_values() {
        let p = [0.7];
        assert_eq!(literal_value(Literal::pos(0), &p).unwrap(), 0.7);
        assert!((literal_value(Literal::neg(0), &p).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(literal_value(Literal::neg(0), &[1.0]).unwrap(), 0.0);
        assert!(matches!(
            literal_value(Literal::pos(0), &[1.5]),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
    }

    #[test]
    fn maximal_violation() {
        let r = rule("A => B", &["A", "B"]);
        let res = rule_penalty(&r, &[1.0, 0.0]).unwrap();
        assert_eq!(res.value, 1.0);
    }

    #[test]
    fn mutex_pair_value_and_grad() {
        let r = rule("A => !B", &["A", "B"]);
        let res = rule_penalty(&r, &[0.5, 0.5]).unwrap();
        assert_eq!(res.value, 0.25);
        assert_eq!(res.grad, vec![0.5, 0.5]);
        // central differences, h = 1e-6
        let h = 1e-6;
        for j in 0..2 {
            let mut hi = [0.5, 0.5];
            let mut lo = [0.5, 0.5];
            hi[j] += h;
            lo[j] -= h;
            let fd = (rule_penalty(&r, &hi).unwrap().value - rule_penalty(&r, &lo).unwrap().value)
                / (2.0 * h);
            assert!((fd - res.grad[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn unmentioned_labels_get_zero_grad() {
        let r = rule("A => C", &["A", "B", "C"]);
        let res = rule_penalty(&r, &[0.3, 0.9, 0.4]).unwrap();
        assert_eq!(res.grad[1], 0.0);
    }

    #[test]
    fn grad_exact_at_zero_factor() {
        // A => B with p_A = 0: value 0, but d/dp_A = 1 - p_B
        let r = rule("A => B", &["A", "B"]);
        let res = rule_penalty(&r, &[0.0, 0.25]).unwrap();
        assert_eq!(res.value, 0.0);
        assert_eq!(res.grad, vec![0.75, 0.0]);
    }

    #[test]
    fn short_probability_vector_rejected() {
        let r = rule("A => C", &["A", "B", "C"]);
        assert!(rule_penalty(&r, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn domain_loss_examples() {
        let v = LabelVocabulary::new(["A", "B", "C"]).unwrap();
        let empty = RuleSet::empty(v.clone());
        let probs = Matrix::from_rows(&[[1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(domain_loss(&empty, &probs).unwrap(), 0.0);
        assert_eq!(
            domain_loss_grad(&empty, &probs).unwrap(),
            Matrix::filled(1, 3, 0.0)
        );

        let rs = parse_rules("A => B\nA => !C", Some(&v)).unwrap();
        assert_eq!(domain_loss(&rs, &probs).unwrap(), 1.0);

        let ab = LabelVocabulary::new(["A", "B"]).unwrap();
        let rs = parse_rules("A => !B", Some(&ab)).unwrap();
        let ones = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        assert_eq!(domain_loss(&rs, &ones).unwrap(), 1.0);
        let half = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(
            domain_loss_grad(&rs, &half).unwrap().as_slice(),
            &[0.5, 0.5]
        );
    }

    #[test]
    fn empty_batch_rejected() {
        let v = LabelVocabulary::new(["A"]).unwrap();
        let rs = RuleSet::empty(v);
        let probs: Matrix<f64> = Matrix::filled(0, 1, 0.0);
        assert!(matches!(domain_loss(&rs, &probs), Err(Error::EmptyBatch)));
    }

    #[test]
    fn sample_gradients_are_separable() {
        let v = LabelVocabulary::new(["A", "B"]).unwrap();
        let rs = parse_rules("A => B\nMUTEX(A, B)", Some(&v)).unwrap();
        let a = Matrix::from_rows(&[[0.3, 0.6], [0.8, 0.1]]).unwrap();
        let b = Matrix::from_rows(&[[0.3, 0.6], [0.2, 0.9]]).unwrap();
        let ga = domain_loss_grad(&rs, &a).unwrap();
        let gb = domain_loss_grad(&rs, &b).unwrap();
        assert_eq!(ga.row(0), gb.row(0));
    }
}
