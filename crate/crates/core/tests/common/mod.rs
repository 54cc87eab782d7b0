//! Test-only oracles: a rule generator and a truth-table evaluator that never
//! touch the library's own rule evaluation.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

pub fn names(l: usize) -> Vec<String> {
    NAMES[..l].iter().map(|s| s.to_string()).collect()
}

/// A rule as plain lists of `(label, negated)`.
#[derive(Debug, Clone)]
pub struct GenRule {
    pub ant: Vec<(usize, bool)>,
    pub cons: Vec<(usize, bool)>,
    pub weight: f64,
}

fn distinct_labels(rng: &mut ChaCha8Rng, l: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..l).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(i));
    }
    out
}

impl GenRule {
    pub fn random(rng: &mut ChaCha8Rng, l: usize, max_side: usize) -> Self {
        let n_ant = rng.random_range(1..=max_side.min(l));
        let n_cons = rng.random_range(0..=max_side.min(l));
        let ant = distinct_labels(rng, l, n_ant)
            .into_iter()
            .map(|j| (j, rng.random_bool(0.5)))
            .collect();
        let cons = distinct_labels(rng, l, n_cons)
            .into_iter()
            .map(|j| (j, rng.random_bool(0.5)))
            .collect();
        let weight = if rng.random_bool(0.5) {
            1.0
        } else {
            // a few decimal digits so the text form is short
            f64::from(rng.random_range(1..100_000u32)) / 1000.0
        };
        Self { ant, cons, weight }
    }

    pub fn text(&self) -> String {
        let lit = |&(j, neg): &(usize, bool)| format!("{}{}", if neg { "!" } else { "" }, NAMES[j]);
        let lhs: Vec<String> = self.ant.iter().map(lit).collect();
        let rhs: Vec<String> = self.cons.iter().map(lit).collect();
        let rhs = if rhs.is_empty() {
            "FALSE".to_string()
        } else {
            rhs.join(" | ")
        };
        format!("{} => {} @ {}", lhs.join(" & "), rhs, self.weight)
    }

    /// Truth-table semantics: the implication holds under `y`.
    pub fn holds(&self, y: &[u8]) -> bool {
        let val = |&(j, neg): &(usize, bool)| (y[j] == 1) ^ neg;
        let body = self.ant.iter().all(val);
        let head = self.cons.iter().any(val);
        !body || head
    }
}

/// All `2^l` binary vectors, label 0 as the most significant bit.
pub fn assignments(l: usize) -> Vec<Vec<u8>> {
    (0..1u32 << l)
        .map(|m| (0..l).map(|j| ((m >> (l - 1 - j)) & 1) as u8).collect())
        .collect()
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
